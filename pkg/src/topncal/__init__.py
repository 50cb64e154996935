"""Top-N focused post-hoc calibration for recommender predictions."""

from .calibrate import (fit_beta, fit_calibrator, fit_gamma, fit_gaussian,
                        fit_histogram, fit_isotonic, fit_platt, vanilla)
from .data import (InteractionTable, RankDistortion, SplitAssignment, SyntheticSpec,
                   generate_synthetic, load_explicit_csv, load_implicit_csv, split)
from .metrics import (adaptive_bin_count, auc, ece, ece_at_n, equal_count_bins,
                      ndcg_at_n, rank_calibration_plot, rdece_at_n,
                      reliability_diagram, rmse)
from .recommend import (fit_bpr, fit_itemknn, fit_mf, load_model, rank_items,
                        save_model)
from .strategy import (GroupScheme, SampleSet, TnfCalibrator, VadAdjuster,
                       build_calibration_samples, fit_original, fit_tnf, fit_vad,
                       make_group_scheme, rank_weights)

__version__ = "0.1.0"
