"""marsched: discrete-event HPC cluster scheduling with heuristic and learned policies."""

__version__ = "0.1.0"
