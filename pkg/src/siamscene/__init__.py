"""Scene detection with a siamese shot distance and spectral clustering."""
