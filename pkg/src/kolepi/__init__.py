"""Kernel operator learning surrogates for controlled epidemic models."""

from . import controls, datagen, epimodels, evaluation, kernels, kol, optcontrol

__all__ = ["controls", "datagen", "epimodels", "evaluation", "kernels", "kol", "optcontrol"]

__version__ = "0.1.0"
