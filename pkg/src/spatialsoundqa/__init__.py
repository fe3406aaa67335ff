"""Spatial sound scene synthesis, SpatialSoundQA generation, features and evaluation."""

__version__ = "0.1.0"

SAMPLE_RATE = 32000
CLIP_SECONDS = 10
CLIP_SAMPLES = SAMPLE_RATE * CLIP_SECONDS
SPEED_OF_SOUND = 343.0
