# Weighted least squares and logistic regression engine
