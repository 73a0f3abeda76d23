"""Resonances of a sound-hard slab perforated by small holes."""
from .commands import register_commands

__all__ = ['register_commands']
