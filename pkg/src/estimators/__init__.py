# Estimators of the longitudinal front-door functional
