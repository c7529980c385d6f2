"""cellsvm: kernel SVM training with integrated hyper-parameter selection.

Loss-specific dual solvers (hinge, least squares, pinball, expectile), k-fold
cross-validation over bandwidth/regularization grids with kernel reuse and
warm starts, task/cell data decomposition, pre-defined learning scenarios, a
CLI, and a flat in-process bridge interface.
"""

from .config import RunConfig
from .dataio import (Dataset, FoldAssignment, Scaling, compute_scaling, load_file,
                     make_folds, parse_csv, parse_libsvm, to_libsvm)
from .errors import (CellSvmError, ConfigError, DataError, NumericError, ParseError,
                     SelectionError)
from .kernel import (KernelCache, KernelMatrix, KernelSpec, cross_matrix, gram_matrix,
                     kernel_eval, libsvm_g_to_gamma)
from .modelselect import (Grid, SelectedModel, SelectedPoint, ValidationTable,
                          adaptive_cross_validate, build_default_grid, build_libsvm_grid,
                          cross_validate, finalize, select_best)
from .scenarios import (ScenarioSpec, TrainedModel, evaluate, load_model, model_from_dict,
                        model_to_dict, predict, save_model, scenario_from_config, train)
from .solver import (LossSpec, SolverProblem, SolverResult, cost_to_lambda, duality_gap,
                     lambda_to_cost, loss_value, solve, warm_start_transform)
from .workingsets import (CellPartition, Task, create_tasks, farthest_first_centers,
                          overlap_partition, random_chunks, recursive_partition,
                          route_test_point, route_test_points, single_cell,
                          voronoi_partition)

__version__ = "0.1.0"
