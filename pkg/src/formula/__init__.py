# Nuisance-model formula parsing and design matrices
