# Utility functions shared across the front-door modules
