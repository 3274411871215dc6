"""Desk-scale robotic apple-pollination pipeline.

Synthetic orchard scenes, RGB-D perception, cluster pose estimation,
target filtering with operator review, tour sequencing, 6-DOF arm
planning, electrostatic spray deposition, and fruit-set metrics,
exposed as a library, a CLI (``pollisim``), and an HTTP service.
"""

__version__ = "0.1.0"
