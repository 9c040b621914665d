"""
Numerical core: Hermitian linear algebra, STFT, ILRMA, MNMF, spatial
estimation, beamforming and the synthetic-scene harness.
"""
