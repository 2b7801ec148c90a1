"""Complex-valued spatial autoencoder for multichannel speech enhancement."""
