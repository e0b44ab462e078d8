"""Environment settings, numeric defaults and random streams."""
