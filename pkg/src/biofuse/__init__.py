"""Multimodal biometric identification from ECG, face, and fingerprint data."""

__version__ = "0.1.0"
