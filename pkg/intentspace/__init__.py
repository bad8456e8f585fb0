"""Intent-space RNN classifier with frozen-parameter addition of unseen intents."""

__version__ = '0.1dev'
