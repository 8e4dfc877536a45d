"""Joint image-attribute VAEs with product-of-experts inference, generation
metrics, and concept naming, at desk scale.

The public surface re-exports the pieces most workflows touch; submodules
hold the rest (autodiff, data, objectives, eval3c, naming, gridio, cli).
"""

from .autodiff import AdamState, Graph, Mlp, Tensor, adam_step, build_mlp, forward_backward, grad_check
from .data import (
    Dataset,
    GenConfig,
    NamingBank,
    TransformParams,
    attrs_to_transform,
    binarize,
    build_naming_bank,
    generate_mnista,
    load_idx,
    make_abstract_queries,
    make_comp_split,
    make_iid_split,
    make_mnist2bit,
    procedural_glyphs,
    read_dataset,
    render,
    write_dataset,
)
from .errors import (
    ArchitectureError,
    DataError,
    DimensionError,
    FormatError,
    ImagineError,
    NumericsError,
    QueryError,
)
from .eval3c import (
    ClassifierConfig,
    EvalReport,
    ObservationClassifier,
    correctness,
    coverage,
    evaluate,
    inception_score,
    js_divergence,
    js_overall,
    load_classifier,
    save_classifier,
    train_classifier,
)
from .gaussian import (
    DiagGaussian,
    GaussianMixture,
    kl_diag,
    kl_monte_carlo,
    mixture_moment_match,
    poe_product,
    sample_reparam,
    slerp,
)
from .model import JvaeModel, ModelConfig, init_model, load_model, save_model
from .naming import baselines, concept_latent, concept_nb, naming_accuracy
from .objectives import (
    ObjectiveConfig,
    TrainLog,
    bivcca,
    elbo_joint,
    elbo_uni,
    jmvae,
    telbo,
    train,
    verify_jmvae_decomposition,
)
from .schema import AttributeSchema, PartialAttributeVector, mnist2bit_schema, mnista_schema, parse_query

__version__ = "0.1.0"
