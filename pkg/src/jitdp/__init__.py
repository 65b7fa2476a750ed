"""Just-in-time defect prediction toolkit: expert-feature model,
hierarchical textCNN model, and early/late model fusion, with a full
evaluation and analysis suite."""

__version__ = "0.1.0"
