"""Mixed nonlinear substructuring with interface impedances."""

from ._core import ConfigError, Error, bench, gain_percent, generate_case, linbench, solve

__all__ = ["ConfigError", "Error", "bench", "gain_percent", "generate_case", "linbench", "solve"]
