from .events import (
    DEFAULT_PROFILE_FEATURES,
    ITEM_FEATURES,
    SCHEMA_VERSION,
    InteractionEvent,
    SchemaError,
    Session,
    TestCase,
    TrainingExample,
    UserHistory,
    load_test_cases,
    load_train_histories,
    read_events,
    write_events,
)
from .prepare import PrepareConfig, prepare, prepare_events
from .sessions import (
    build_user_histories,
    filter_dataset,
    make_test_cases,
    make_training_examples,
    segment_all,
    segment_sessions,
)
from .synthetic import SyntheticConfig, generate, write_synthetic
