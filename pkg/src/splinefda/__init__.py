"""Data-driven tensor-spline representation and classification of functional data."""

from .errors import (
    SplineFdaError,
    InputError,
    DomainError,
    RankError,
    DataFormatError,
    ConditioningError,
    ConfigurationError,
)
from .splines import (
    KnotVector,
    BasisSpec,
    Spline,
    OrthonormalBasis,
    bspline_evaluate,
    basis_evaluate_all,
    gram_matrix,
    orthonormalize,
    project_1d,
    uniform_knots,
)
from .tensor import (
    TensorBasisSpec,
    TensorCoefficients,
    tensor_evaluate,
    tensor_evaluate_grid,
    tensor_project,
    tensor_l2_error,
)
from .knots import (
    KnotCandidateSet,
    RegressionTree,
    StoppingCurve,
    extract_knots,
    fit_tree,
    noise_reference_curve,
    select_knot_count,
    stopping_curve,
)
from .density import (
    CdfModel,
    DensityModel,
    cdf_from_density,
    density_from_values,
    empirical_cdf,
    estimate_density,
    inverse_cdf,
    inverse_uniformize_2d,
    uniformize_2d,
)
from .transforms import (
    FunctionalSample,
    domain_transform,
    equivalence_check,
    inverse_state_transform,
    state_transform,
    weighted_inner_product,
)
from .imaging import (
    HilbertMap,
    ImageGrid,
    column_major_sequence,
    gradient_image,
    hilbert_map,
    image_to_sequence,
    pad_to_square,
    sequence_to_image,
)
from .fpca import (
    ClassificationResult,
    ClassifierModel,
    FpcaClassModel,
    batch_coefficients,
    classify,
    evaluate,
    fit_class_fpca,
    project_eigenspace,
    residual_weights,
    sample_coefficients,
    select_components,
    synthetic_kl_samples,
)
from .io import (
    DatasetManifest,
    ModelArchive,
    canonical_json,
    config_hash,
    load_csv_curves,
    load_idx,
    load_idx_labels,
    load_model,
    save_csv_curves,
    save_model,
    write_idx_images,
    write_idx_labels,
)
from .pipeline import (
    PipelineConfig,
    classify_archive,
    evaluate_archive,
    ingest_dataset,
    preprocess_images,
    render_svg_curves,
    run_pipeline,
)

__version__ = "0.1.0"
