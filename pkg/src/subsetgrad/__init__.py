"""Best subset selection by stochastic gradients over Bernoulli inclusion probabilities."""
