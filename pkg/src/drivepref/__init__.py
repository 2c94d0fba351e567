"""drivepref: evaluate driving-behavior specifications against crowd preferences.

Library layout (one module per concern):

- ``world`` / ``dataset_io``: maps, trajectories, scenarios, realizations, IO
- ``rules``: the 14 violation metrics producing a ViolationVector
- ``rulebook``: pre-order rulebooks and realization-pair comparison
- ``preferences``: annotations, agreement, Bradley-Terry scores, labeled pairs
- ``learners``: seven classifiers over violation-score differences
- ``evaluation``: repeated nested cross-validation and reported metrics
- ``scenariogen``: synthetic datasets with planted violations and crowds
- ``cli`` / ``service``: pipeline commands and the annotation HTTP service
"""
from .dataset_io import Dataset, load_dataset, save_dataset
from .errors import (CapabilityError, DrivePrefError, GenerationError,
                     LinkError, LookupRuleError, ParseError,
                     TrajectoryRangeError, ValidationError)
from .geometry import OrientedRect, min_distance
from .preferences import (Annotation, BTScores, LabeledPair, PairStats,
                          agreement, bin_agreements, compute_pair_stats,
                          fit_bradley_terry, make_labeled_pairs)
from .rulebook import (Comparison, Rulebook, compare, compare_with_fallback,
                       default_rulebook, higher_priority, load_rulebook,
                       maximal_violated)
from .rules import (RULE_IDS, RuleParams, ViolationVector, load_rule_params,
                    violation_vector)
from .world import (Agent, Lane, Map, Realization, Scenario, Trajectory,
                    footprint_at, sample_pose)

__version__ = "0.1.0"
