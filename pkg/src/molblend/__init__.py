"""molblend: a desk-scale molecular chat assistant.

2D graph and 3D point-cloud encoders are fused by a cross-attention
blending module, compressed to a fixed set of query tokens, and injected
into a small byte-level decoder. Includes the two-stage trainer, an
LLM-driven instruction-data factory, and the evaluation harness.
"""

__version__ = "0.1.0"
