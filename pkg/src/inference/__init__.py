# Efficient influence function and Wald inference
