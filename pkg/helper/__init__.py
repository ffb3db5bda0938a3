"""Processing modules of the spatio-temporal extremes toolkit."""
