APP_NAME = "Triage Fusion"
APP_VERSION = "0.3.0"

N_LEVELS = 5
LEVELS = (1, 2, 3, 4, 5)

INPUT_COLUMNS = (
    "record_id",
    "gender",
    "age_at_visit",
    "temperature",
    "heartrate",
    "resp_rate",
    "pain_score",
    "o2_sat",
    "systolic_bp",
    "diastolic_bp",
    "chief_complaint",
    "acuity",
)

VITALS = (
    "temperature",
    "heartrate",
    "resp_rate",
    "o2_sat",
    "systolic_bp",
    "diastolic_bp",
)

# Column order of the tabular feature matrix
TABULAR_FEATURES = (
    "gender",
    "age_at_visit",
    "temperature",
    "heartrate",
    "resp_rate",
    "pain_score",
    "o2_sat",
    "systolic_bp",
    "diastolic_bp",
    "unable",
)

VITAL_BOUNDS = {
    "temperature": (80.0, 110.0),
    "heartrate": (20.0, 300.0),
    "resp_rate": (4.0, 80.0),
    "o2_sat": (50.0, 100.0),
    "systolic_bp": (40.0, 300.0),
    "diastolic_bp": (20.0, 200.0),
    "pain_score": (0.0, 10.0),
}
AGE_BOUNDS = (0, 120)
ADULT_AGE = 18

PAIN_UNABLE_TOKENS = ("unable", "uta", "u/a")
GENDER_TOKENS = {
    "1": 1,
    "m": 1,
    "male": 1,
    "0": 0,
    "f": 0,
    "female": 0,
}

AGE_BRACKETS = (
    ("Infants", 0, 1),
    ("Toddlers/Preschool", 2, 5),
    ("School Age", 6, 12),
    ("Adolescents", 13, 17),
)

PROB_COLUMNS = ("p1", "p2", "p3", "p4", "p5")
PROB_HEADER = ("record_id",) + PROB_COLUMNS
PREDICTION_HEADER = ("record_id", "pred_level") + PROB_COLUMNS

ADULT_TABLE_COLUMNS = (
    "Model",
    "Training Error",
    "Test Error",
    "QWK",
    "Accuracy",
    "Balanced Acc",
    "Macro F1",
)
PEDIATRIC_TABLE_COLUMNS = ("Model", "QWK", "Accuracy", "Balanced Acc", "Macro F1")
HEATMAP_COLUMNS = ("p_tab", "p_text", "cohort", "metric", "value")
STRATA_COLUMNS = ("Bracket", "N", "Both Intact", "No Tabular", "No Text")

MODEL_FILE_VERSION = 1

OUTPUT_DIR_ENV = "TRIAGE_FUSION_OUT"
DEFAULT_OUTPUT_DIR = "runs"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_TRAINING = 4
