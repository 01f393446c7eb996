"""egomatch: learn a joint embedding between first-person video and the
people visible in a synchronized third-person view, so the camera wearer
can be identified among them."""

__version__ = "0.1.0"
