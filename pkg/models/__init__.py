"""
GAN Ensemble Lab - Models Package
Contains the numpy network engine, GAN members, ensembles, the downstream
classifier and checkpoint management.
"""
