# Dataset generators for the exogeneity bounds library
