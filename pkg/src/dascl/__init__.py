"""Desk-scale domain-generalisation lab: calibrated augmentation policies,
cross-domain supervised contrastive training, and a leave-one-domain-out
experiment harness with a feature-space domain-distance probe."""

__version__ = "0.1.0"
