"""Defense coordination and allocation for multiplayer reach-avoid games."""
from .allocation import Coalition, CoalitionAssignment, coalition, exact_allocation, hilp, mdea
from .coordination import CoalitionView, dmsdc_step, single_attack_value
from .engine import ScenarioConfig, run_game
from .geometry import ConvexRegion, ball, box, build_srs, cylinder
from .solver import CheckCounter, solve_min_distance, solve_projection

__version__ = "0.1.0"

__all__ = [
    "Coalition", "CoalitionAssignment", "coalition", "exact_allocation", "hilp", "mdea",
    "CoalitionView", "dmsdc_step", "single_attack_value", "ScenarioConfig", "run_game",
    "ConvexRegion", "ball", "box", "build_srs", "cylinder", "CheckCounter",
    "solve_min_distance", "solve_projection",
]
