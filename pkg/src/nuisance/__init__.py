# Nuisance fits, weight processes and sequential regressions
