"""
GAN Ensemble Lab - Data Package
The 2D Gaussian grid, labeled datasets, their CSV storage and run manifests.
"""
