"""Value-decomposition and policy-gradient learners for cooperative matrix games and the Bridge grid."""

__version__ = "0.1.0"
