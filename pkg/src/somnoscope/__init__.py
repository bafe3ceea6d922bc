"""Somnoscope: explainable sleep-satisfaction classification from overnight sound.

Pipeline: burst-based sound-event extraction -> 2,400-bin normalized power
spectra -> VAE latent representations -> GMM cluster posteriors -> order-
preserving sequence augmentation -> seq-to-one LSTM -> Shapley-value
explanation of the trained classifier.
"""

__version__ = "0.1.0"
