"""Visual peg insertion with PPO, cycle-consistent domain translation and Real2Sim inference."""

__version__ = "0.1.0"
