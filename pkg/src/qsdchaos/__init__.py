"""Quantum state diffusion trajectories of the driven Duffing oscillator and
the chaos diagnostics used to read them."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source checkout
    __version__ = "0.1.0"
