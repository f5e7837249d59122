"""Multi-view masked pretraining and cross-view segmentation for 3D volumes.

Desk-scale research package: synthetic phantom corpora, a small windowed-
attention encoder/decoder, four self-supervised proxy objectives, cross-view
consistency fine-tuning, semi-supervised pseudo-labeling, and overlapping
sliding-window multi-view inference with exact metric oracles.
"""

__version__ = "0.1.0"
