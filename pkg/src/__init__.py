"""Non-i.i.d. nonlocality certification - Bell tests with settings-blind post-selection."""

__version__ = "1.0.0"
