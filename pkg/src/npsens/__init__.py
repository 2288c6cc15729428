"""Nonparametric sensitivity analysis for treatment effects among the treated.

TMLE of the effect with conservative imputation of censored treated outcomes,
influence-curve inference, a Super Learner for the nuisance regressions, and
a test over the bias bound ``delta0``.
"""

__version__ = "0.1.0"
