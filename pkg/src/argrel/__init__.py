"""Context-aware argument relation prediction with pool-based active
learning and transfer learning, at desk scale."""

__version__ = "0.1.0"
