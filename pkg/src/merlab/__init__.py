"""Finite-model workbench for model equivalence relations.

Structures are finite, many-sorted and purely relational.  An
equivalence notion is declared once (a closed two-copy sentence, a
reduct, a family tower, a labeled metric reduct, or a cofinal order)
and every checker, invariant and report in the package runs against
that single declaration.
"""

from .core import (
    Atom,
    Bottom,
    Budget,
    BudgetExceeded,
    Eq,
    Exists,
    FiniteStructure,
    Forall,
    Formula,
    Iff,
    Implies,
    LinkAtom,
    MerlabError,
    Not,
    Or,
    And,
    RelationSymbol,
    SortError,
    Theory,
    Top,
    Vocabulary,
    all_bijection_families,
    apply_family,
    compile_formula,
    compose_families,
    conj,
    count_bijection_families,
    count_structures,
    definable_set,
    disj,
    empty_theory,
    enumerate_structures,
    evaluate,
    find_isomorphisms,
    free_variables,
    identity_family,
    invert_family,
    is_isomorphism,
    models_of,
    quantifier_rank,
    structure,
    subformulas,
    validate_formula,
    vocabulary,
)
from .parser import ParseError, format_formula, infer_free_sorts, parse_formula
from .pair import (
    CoupledSignature,
    coupled_signature,
    coupled_transport_map,
    evaluate_pair,
    make_double,
    prime_translate,
    transport,
    validate_pair_formula,
)
from .nsets import (
    FamilyTower,
    NSetValue,
    OrderSpec,
    PartitionedFormula,
    ShelahizedStructure,
    base_order_relation,
    expansion_vocabulary,
    flatten_2ydlept,
    nset_equal,
    nset_leq,
    nset_value,
    shelahize,
    tower_equivalent,
    tower_values,
)
from .mer import (
    Builtin,
    ByApproxReduct,
    ByCofinalOrder,
    ByFamilyTower,
    ByReduct,
    BySentence,
    ErVerdict,
    GroupoidVerdict,
    MerSpec,
    Metric,
    NotEquivalenceError,
    PrefixClass,
    Scale,
    approx_mer,
    check_approx_reduct,
    check_equivalence_relation,
    check_groupoid_laws,
    classify_prefix,
    cofinal_mer,
    coupled_families,
    equivalent,
    groupoid_morphisms,
    identity_mer,
    is_morphism,
    mer_classes,
    metric_of,
    recheck_er_verdict,
    recheck_groupoid_verdict,
    reduct_mer,
    scale_of,
    spec_invariant,
    tower_sentence,
    trivial_mer,
)
from .invariants import (
    DensityReport,
    InvariantProfile,
    TypePartition,
    TypePoint,
    YdleptVerdict,
    density_report,
    groupoid_type_quotient,
    invariant_profile,
    invariants_report,
    pointed_type,
    recheck_ydlept_verdict,
    type_space,
    ydlept_at_scale,
)
from .catalog import (
    CatalogEntry,
    SwapWitness,
    adjacency_family,
    adjacency_nset,
    catalog_get,
    catalog_ids,
    check_extension_axioms,
    expand_interpretation,
    find_swap_witness,
    forget_interpretation,
    generate_extension_graph,
    lift_interpretation_isomorphism,
    swap_adjacency,
    validate_catalog,
)
from .workspace import (
    Workspace,
    WorkspaceError,
    family_shorthand,
    load_metric,
    load_workspace,
    order_shorthand,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
