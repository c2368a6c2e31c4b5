# Datasets, data-generating processes and exact enumeration oracles
