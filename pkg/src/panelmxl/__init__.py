"""Panel mixed logit estimation in preference and willingness-to-pay space."""

from .dataset import (AttributeSummary, ChoiceDataset, ChoiceTask, ColumnMapping,
                      PersonRecord, load_long_table, save_long_table,
                      summarize_attributes, validate_dataset)
from .draws import (DrawPlan, DrawTensor, build_draw_tensor, default_primes,
                    make_plan, radical_inverse_sequence,
                    standard_normal_from_uniform)
from .errors import (ConfigurationError, DataParseError, DomainError,
                     EstimationError, EvaluationError, IdentificationError,
                     IntegrityError, PanelMxlError, SchemaError, SpecSyntaxError)
from .estimate import (EstimationResult, OptimizerConfig, estimate_pipeline,
                       fit_statistics, maximize, result_from_json,
                       result_to_json, robust_covariance, two_stage_start)
from .kernel import (LikelihoodEvaluation, alternative_utility,
                     choice_probabilities, realize_coefficients,
                     score_vector, simulated_loglikelihood)
from .modelspec import (ModelSpec, ParameterDef, UtilityTerm, format_model_spec,
                        parse_model_spec, validate_spec)
from .simulate import (ForecastResult, SyntheticDesign, TrueParameters,
                       forecast_scenario, generate_design, simulate_choices,
                       truth_from_mapping)
from .wtp import (ScenarioSpec, WtpReport, WtpRow, build_report,
                  coefficient_of_variation, magnitude_ratio,
                  marginal_money_values, scenario_report, scenario_value,
                  sign_share)

__version__ = "0.1.0"
