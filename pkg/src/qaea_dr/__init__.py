"""Text augmentation for dense retrieval.

Documents are expanded into question-answer pairs and element-driven
events via model prompting with scoring-based regeneration; originals
and generated texts are embedded into composable vector stores and
evaluated with standard ranking metrics. A theory module numerically
checks the normalized-margin results that motivate the approach.
"""

__version__ = "0.1.0"
