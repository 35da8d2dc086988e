"""Privacy-preserving student training via discriminative and generative
distillation: teacher ensembles on disjoint private shards, noisy label
aggregation, data-free generation, VAE reconstruction triples, and exact
budget accounting.
"""

__version__ = "0.1.0"
