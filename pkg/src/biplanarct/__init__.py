"""CT volume reconstruction from biplanar X-rays.

A numpy-based library: a small reverse-mode autodiff engine, an
attention-based cross-view fusion generator, a conditional 3D patch
discriminator, least-squares adversarial training, parallel-beam projection
synthesis, procedural phantom data, and full metric evaluation.
"""

__version__ = "0.1.0"
