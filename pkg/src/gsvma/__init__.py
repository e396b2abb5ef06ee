"""Genetic-algorithm feature selection around an ANOVA-kernel SVM."""

__version__ = "0.1.0"
