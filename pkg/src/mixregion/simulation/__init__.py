from .dgp2d import Dgp2dConfig, gen_2d, true_region_2d, truth_2d
from .dgp3d import Dgp3dConfig, gen_3d, region_effect_3d, true_region_3d, truth_3d
from .evaluate import Dgp, EvalRecord, evaluate_run, summarize
from .harness import SimulationSpec, run_simulation

__all__ = [
    "Dgp",
    "Dgp2dConfig",
    "Dgp3dConfig",
    "EvalRecord",
    "SimulationSpec",
    "evaluate_run",
    "gen_2d",
    "gen_3d",
    "region_effect_3d",
    "run_simulation",
    "summarize",
    "true_region_2d",
    "true_region_3d",
    "truth_2d",
    "truth_3d",
]
