"""snapcorr: correlation operators, kernels and KL expansions of parametric snapshots."""
