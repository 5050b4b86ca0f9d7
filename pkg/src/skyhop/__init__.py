"""Planning toolkit for delivery drones that ride public transit.

Two layers: an allocation layer that turns depots and packages into
per-agent delivery walks with an additive makespan guarantee, and a
routing layer that plans energy-feasible minimum-time paths over the
timetable, deconflicts the fleet under vehicle capacities, and replans
as missions complete.
"""

from .allocation import (
    AllocationGraph,
    BoundReport,
    DeliveryPath,
    Tour,
    build_allocation_graph,
    merge_split_tours,
)
from .errors import (
    AllocationInfeasibleError,
    ConfigError,
    GtfsError,
    InfeasibleError,
    InputError,
    NoPathError,
    SkyhopError,
    SolveTimeoutError,
    SolverInfeasibleError,
    TaskInfeasibleError,
    ValidationError,
)
from .geo import BoundingBox, GeoPoint, distance_km
from .gtfs import load_timetable
from .heuristics import HeuristicBundle, build_bundle
from .mapf import (
    AgentItinerary,
    MultiAgentSolution,
    detect_conflicts,
    solve,
    solve_itineraries,
    validate_solution,
)
from .mcsp import (
    AgentPath,
    DeliveryTask,
    LegPlan,
    LegSpec,
    PathLeg,
    focal_mcsp,
    plan_legs,
    plan_task,
)
from .network import (
    DroneSpec,
    OperationGraph,
    TimedStop,
    TransitTrip,
    assign_capacities,
)
from .pipeline import (
    preprocess,
    run_allocate,
    run_bench,
    run_preprocess,
    run_route,
    run_simulate,
)
from .replanner import (
    HorizonResult,
    Mission,
    missions_from_path,
    run_horizon,
)
from .scenario import (
    Scenario,
    ScenarioConfig,
    generate_scenario,
    load_scenario,
    save_scenario,
)
from .surrogate import (
    DirectFlightSurrogate,
    SurrogateTable,
    build_surrogate,
    halton_sites,
)

__version__ = "0.1.0"
