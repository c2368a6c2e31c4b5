# Monte Carlo simulation study harness
