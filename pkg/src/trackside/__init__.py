"""Race-photo analysis pipeline engine.

Detection-driven photo enrichment (car, number, manufacturer, orientation),
embedding-based team identification, wheel-keypoint metric measurement,
offline/online evaluation metrics, and a feedback loop. All neural inference
sits behind the pluggable provider interface in :mod:`trackside.providers`,
so every algorithm here is testable with the deterministic synthetic
provider.
"""

__version__ = "0.1.0"
