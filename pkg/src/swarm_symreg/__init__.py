"""Symbolic-model extraction for collective behaviors.

Pipeline: simulate swarms (`swarmsim`), learn a neural interaction surrogate
(`surrogate`), sample it into regression tables (`datasets`), then recover
closed-form interaction laws with nested macro-micro evolution (`mme`) over
expression trees (`exprtree`).  `cli` orchestrates the stages.
"""

__version__ = "0.1.0"
