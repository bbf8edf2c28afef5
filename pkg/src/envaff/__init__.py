"""Environment-aware point affordance for articulated objects among occluders."""

__version__ = "0.1.0"
