"""Two-branch state-space variational autoencoder for separating slow background
dynamics from event-evoked inputs in multichannel time series."""

__version__ = "0.1.0"
