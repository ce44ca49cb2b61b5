"""Self-play learning of Nash equilibria in tabular zero-sum Markov games."""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:    # running from a source tree without install
    __version__ = "0.0.0+local"

from .game import MAX, MIN, MarkovGame, make_parity_game, make_random_game, sample_episode
from .schedules import Hyperparams
from .nash_q import run_nash_q
from .nash_v import run_nash_v
from .evaluation import exploitability_exact, nash_value_oracle

__all__ = [
    "MAX", "MIN", "MarkovGame", "Hyperparams", "make_random_game", "make_parity_game",
    "sample_episode", "run_nash_q", "run_nash_v", "nash_value_oracle", "exploitability_exact",
    "__version__",
]
