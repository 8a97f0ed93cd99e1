"""Movable-antenna ISAC beamforming for V2I: library, CLI and HTTP API."""
