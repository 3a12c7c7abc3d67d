#!/usr/bin/env python3
"""Regenerates the synthetic test fixtures under fixtures/.

Everything here is deterministic: fixed seeds, fixed orderings. Run from
the repository root:

    python3 tools/genfixtures.py

The replay cassette is NOT produced here; it depends on the exact prompt
bytes the library renders, so it is recorded by the ignored Rust test
`generate_baseline_cassette` in crates/stagekit-cli/tests/gen_cassette.rs.
"""

import csv
import json
import os
import random

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
FIX = os.path.join(ROOT, "fixtures")

DASWOW_STAGES = [
    "load_data",
    "helper_functions",
    "data_preprocessing",
    "data_exploration",
    "modelling",
    "model_evaluation",
    "model_prediction",
    "result_visualization",
    "save_results",
    "comment_only",
]

META_COLS = [
    "execution_count",
    "num_lines",
    "num_chars",
    "num_words",
    "has_output",
    "num_imports",
    "num_functions",
    "num_calls",
    "uses_pandas",
    "uses_numpy",
    "uses_sklearn",
    "uses_matplotlib",
    "num_comments",
    "num_magics",
    "heading_level",
    "position_ratio",
    "output_type",
    "kernel_time_ms",
]

LABEL_HEADER = ["filename", "cell_index", "cell_type", "text"] + DASWOW_STAGES + META_COLS
assert len(LABEL_HEADER) == 32


def write(path, text):
    full = os.path.join(FIX, path)
    os.makedirs(os.path.dirname(full), exist_ok=True)
    with open(full, "w", newline="") as f:
        f.write(text)
    print(f"wrote {path}")


# ---------------------------------------------------------------- taxonomies

DSPIPELINES_TOML = '''name = "dspipelines"

[[stage]]
headword = "Data Acquisition"
definition = "Collecting raw data from files, databases, or remote services."
aliases = ["Data Collection"]

[[stage]]
headword = "Data Preparation"
definition = "Cleaning, filtering, joining, and reshaping raw data for analysis."
aliases = ["Data Cleaning"]

[[stage]]
headword = "Data Exploration"
definition = "Inspecting and visualizing data to understand its structure and quality."
aliases = ["EDA"]

[[stage]]
headword = "Feature Engineering"
definition = "Deriving, selecting, encoding, and scaling model input features."
aliases = []

[[stage]]
headword = "Modeling"
definition = "Choosing a learning algorithm and configuring its hyperparameters."
aliases = []

[[stage]]
headword = "Training"
definition = "Fitting the configured model to training data."
aliases = ["Model Training"]

[[stage]]
headword = "Evaluation"
definition = "Measuring model quality on held-out data with metrics and diagnostics."
aliases = ["Validation"]

[[stage]]
headword = "Prediction"
definition = "Applying a fitted model to new inputs to produce outputs."
aliases = ["Inference"]

[[stage]]
headword = "Interpretation"
definition = "Explaining model behavior and relating outputs to the original problem."
aliases = []

[[stage]]
headword = "Deployment"
definition = "Packaging and persisting models or results for use outside the notebook."
aliases = []

[[stage]]
headword = "Monitoring"
definition = "Tracking a deployed model's inputs, outputs, and quality over time."
aliases = []
'''

DASWOW_TOML = '''name = "daswow"

[[stage]]
headword = "load_data"
definition = "Reading datasets into the notebook."

[[stage]]
headword = "helper_functions"
definition = "Utility definitions not tied to a single pipeline stage."

[[stage]]
headword = "data_preprocessing"
definition = "Transforming and cleaning loaded data."

[[stage]]
headword = "data_exploration"
definition = "Profiling and visualizing the data."

[[stage]]
headword = "modelling"
definition = "Building and fitting models."

[[stage]]
headword = "model_evaluation"
definition = "Scoring fitted models."

[[stage]]
headword = "model_prediction"
definition = "Generating predictions from fitted models."

[[stage]]
headword = "result_visualization"
definition = "Plotting results and model outputs."

[[stage]]
headword = "save_results"
definition = "Persisting outputs, models, or figures."

[[stage]]
headword = "comment_only"
definition = "Cells containing only comments."
'''

CROSS_MAPPING_TOML = '''# Directed expert mappings between the two stage vocabularies.
# f maps dspipelines stages to daswow stages; g maps the reverse direction.
# Their union forms the bipartite edge set the unifier groups over.

[f]
"Data Acquisition" = ["load_data"]
"Data Preparation" = ["data_preprocessing"]
"Data Exploration" = ["data_exploration", "result_visualization"]
"Modeling" = ["modelling"]
"Training" = ["modelling"]

[g]
model_evaluation = ["Evaluation"]
model_prediction = ["Prediction"]
save_results = ["Deployment"]
result_visualization = ["Interpretation"]
'''

SYNONYMS_TOML = '''# Headword replacement chains for wording-sensitivity runs.
# Applied in order; each entry rewrites the current headword of its chain.

[[mutation]]
target = "Modeling"
replacement = "Model Building"
index = 1

[[mutation]]
target = "Model Building"
replacement = "Model Construction"
index = 2

[[mutation]]
target = "Model Construction"
replacement = "Model Design"
index = 3

[[mutation]]
target = "Evaluation"
replacement = "Assessment"
index = 1
'''

SYNONYMS_OVERBUDGET_TOML = '''# Four chained replacements of one headword: one past the allowed budget.

[[mutation]]
target = "Modeling"
replacement = "Model Building"
index = 1

[[mutation]]
target = "Model Building"
replacement = "Model Construction"
index = 2

[[mutation]]
target = "Model Construction"
replacement = "Model Design"
index = 3

[[mutation]]
target = "Model Design"
replacement = "Model Authoring"
index = 4
'''

STAGE_CODES_TOML = '''[codes]
1 = "Data Acquisition"
2 = "Data Preparation"
3 = "Data Exploration"
4 = "Feature Engineering"
5 = "Modeling"
6 = "Training"
7 = "Evaluation"
8 = "Prediction"
9 = "Interpretation"
10 = "Deployment"
11 = "Monitoring"
'''

# ------------------------------------------------------------- static mapping

# Curated cores of real library names per stage code, extended with
# systematic plausible names to reach exactly 404 unique entries.
CURATED = {
    1: [  # Data Acquisition
        "read_csv", "read_excel", "read_json", "read_parquet", "read_sql",
        "read_sql_query", "read_sql_table", "read_html", "read_pickle",
        "read_feather", "read_orc", "read_stata", "read_fwf", "read_hdf",
        "read_xml", "read_table", "load_iris", "load_digits", "load_wine",
        "load_breast_cancer", "load_diabetes", "fetch_openml",
        "fetch_california_housing", "fetch_20newsgroups", "fetch_covtype",
        "fetch_olivetti_faces", "make_classification", "make_regression",
        "make_blobs", "make_moons", "make_circles", "load_svmlight_file",
        "loadtxt", "genfromtxt", "load_npz", "urlretrieve", "load_dataset",
        "ImageDataGenerator", "image_dataset_from_directory", "load_img",
    ],
    2: [  # Data Preparation
        "dropna", "fillna", "drop", "drop_duplicates", "replace", "rename",
        "astype", "merge", "concat", "join", "melt", "pivot", "pivot_table",
        "stack", "unstack", "sort_values", "sort_index", "reset_index",
        "set_index", "reindex", "query", "filter", "apply", "applymap",
        "map", "groupby", "agg", "aggregate", "resample", "interpolate",
        "clip", "round", "abs", "cut", "qcut", "get_dummies", "to_datetime",
        "to_numeric", "to_timedelta", "train_test_split", "KFold",
        "StratifiedKFold", "GroupKFold", "TimeSeriesSplit", "ShuffleSplit",
        "SimpleImputer", "KNNImputer", "IterativeImputer", "MissingIndicator",
        "remove_stopwords", "strip_punctuation", "word_tokenize",
        "sent_tokenize", "pad_sequences", "text_to_word_sequence",
    ],
    3: [  # Data Exploration
        "describe", "head", "tail", "info", "sample", "nunique",
        "value_counts", "corr", "cov", "hist", "boxplot", "plot",
        "scatter", "scatter_matrix", "pairplot", "heatmap", "countplot",
        "distplot", "histplot", "kdeplot", "jointplot", "violinplot",
        "barplot", "lineplot", "relplot", "catplot", "lmplot", "swarmplot",
        "profile_report", "crosstab", "isnull", "isna", "notna", "duplicated",
        "skew", "kurtosis", "memory_usage",
    ],
    4: [  # Feature Engineering
        "StandardScaler", "MinMaxScaler", "RobustScaler", "MaxAbsScaler",
        "Normalizer", "OneHotEncoder", "OrdinalEncoder", "LabelEncoder",
        "LabelBinarizer", "MultiLabelBinarizer", "PolynomialFeatures",
        "PowerTransformer", "QuantileTransformer", "FunctionTransformer",
        "KBinsDiscretizer", "Binarizer", "CountVectorizer", "TfidfVectorizer",
        "TfidfTransformer", "HashingVectorizer", "DictVectorizer", "PCA",
        "IncrementalPCA", "KernelPCA", "TruncatedSVD", "NMF", "FastICA",
        "SelectKBest", "SelectPercentile", "RFE", "RFECV", "VarianceThreshold",
        "chi2", "f_classif", "mutual_info_classif", "ColumnTransformer",
        "make_column_transformer", "fit_transform", "transform",
        "inverse_transform", "Word2Vec", "Doc2Vec",
    ],
    5: [  # Modeling
        "LinearRegression", "LogisticRegression", "Ridge", "Lasso",
        "ElasticNet", "SGDClassifier", "SGDRegressor", "Perceptron",
        "DecisionTreeClassifier", "DecisionTreeRegressor",
        "RandomForestClassifier", "RandomForestRegressor",
        "ExtraTreesClassifier", "GradientBoostingClassifier",
        "GradientBoostingRegressor", "AdaBoostClassifier", "BaggingClassifier",
        "VotingClassifier", "StackingClassifier", "HistGradientBoostingClassifier",
        "XGBClassifier", "XGBRegressor", "LGBMClassifier", "LGBMRegressor",
        "CatBoostClassifier", "SVC", "SVR", "LinearSVC", "NuSVC",
        "KNeighborsClassifier", "KNeighborsRegressor", "GaussianNB",
        "MultinomialNB", "BernoulliNB", "KMeans", "MiniBatchKMeans",
        "DBSCAN", "AgglomerativeClustering", "GaussianMixture", "MLPClassifier",
        "MLPRegressor", "Sequential", "Dense", "Conv2D", "LSTM", "Dropout",
        "Embedding", "Pipeline", "make_pipeline", "compile",
    ],
    6: [  # Training
        "fit", "fit_predict", "partial_fit", "fit_generator", "train",
        "train_on_batch", "GridSearchCV", "RandomizedSearchCV",
        "HalvingGridSearchCV", "cross_validate", "learning_curve",
        "validation_curve", "EarlyStopping", "ModelCheckpoint",
        "ReduceLROnPlateau", "LearningRateScheduler", "warm_start_fit",
    ],
    7: [  # Evaluation
        "score", "accuracy_score", "f1_score", "precision_score",
        "recall_score", "roc_auc_score", "roc_curve", "auc",
        "precision_recall_curve", "average_precision_score", "log_loss",
        "confusion_matrix", "classification_report", "matthews_corrcoef",
        "cohen_kappa_score", "balanced_accuracy_score", "mean_squared_error",
        "mean_absolute_error", "r2_score", "mean_absolute_percentage_error",
        "median_absolute_error", "explained_variance_score", "cross_val_score",
        "silhouette_score", "davies_bouldin_score", "calinski_harabasz_score",
        "adjusted_rand_score", "normalized_mutual_info_score", "brier_score_loss",
        "evaluate", "ConfusionMatrixDisplay", "RocCurveDisplay",
    ],
    8: [  # Prediction
        "predict", "predict_proba", "predict_log_proba", "decision_function",
        "predict_on_batch", "predict_generator", "forecast", "predict_classes",
        "transform_predict", "apply_model", "infer", "score_samples",
    ],
    9: [  # Interpretation
        "permutation_importance", "partial_dependence", "plot_partial_dependence",
        "PartialDependenceDisplay", "shap_values", "TreeExplainer",
        "KernelExplainer", "DeepExplainer", "LimeTabularExplainer",
        "explain_instance", "plot_importance", "plot_tree", "export_graphviz",
        "export_text", "summary_plot", "force_plot", "dependence_plot",
    ],
    10: [  # Deployment
        "to_csv", "to_parquet", "to_pickle", "to_excel", "to_json", "to_sql",
        "to_hdf", "to_feather", "save", "save_model", "load_model", "dump",
        "savez", "save_weights", "export_saved_model", "log_model",
        "register_model", "savefig",
    ],
    11: [  # Monitoring
        "log_metric", "log_metrics", "log_param", "log_params", "log_artifact",
        "set_tag", "start_run", "autolog", "detect_drift", "psi_score",
        "population_stability_index", "monitor_predictions",
    ],
}

FILLER = {
    1: ("load", ["archive", "bundle", "cache", "corpus", "manifest",
                 "partition", "snapshot", "warehouse"]),
    2: ("clean", ["addresses", "booleans", "categories", "currencies",
                  "dates", "encodings", "identifiers", "nulls", "outliers",
                  "whitespace"]),
    3: ("profile", ["cardinality", "completeness", "correlations",
                    "distributions", "extremes", "gaps", "missingness",
                    "sparsity"]),
    4: ("encode", ["buckets", "cyclic", "deltas", "flags", "interactions",
                   "lags", "ratios", "windows"]),
    5: ("build", ["autoencoder", "baseline", "blender", "cascade",
                  "ensemble", "prototype", "surrogate", "tower"]),
    6: ("tune", ["anneal", "batches", "epochs", "folds", "schedule",
                 "warmup"]),
    7: ("check", ["calibration", "coverage", "leakage", "lift",
                  "residuals", "thresholds"]),
    8: ("emit", ["batch_scores", "decisions", "forecasts", "rankings"]),
    9: ("explain", ["anchors", "counterfactuals", "prototypes",
                    "saliency"]),
    10: ("publish", ["bundle", "container", "endpoint", "registry",
                     "snapshot_dir"]),
    11: ("track", ["alerts", "decay", "latency", "skew", "volume"]),
}


def gen_stages_csv():
    rows = []
    seen = set()
    for code in range(1, 12):
        for name in CURATED[code]:
            assert name not in seen, f"duplicate curated name {name}"
            seen.add(name)
            rows.append((name, code))
    for code in range(1, 12):
        verb, objects = FILLER[code]
        for obj in objects:
            name = f"{verb}_{obj}"
            assert name not in seen, f"duplicate filler name {name}"
            seen.add(name)
            rows.append((name, code))
    assert len(rows) == 404, f"stages.csv has {len(rows)} rows, need 404"
    out = ["name,stage"]
    for name, code in rows:
        out.append(f"{name},{code}")
    write("mapping/stages.csv", "\n".join(out) + "\n")
    return {name for name, _ in rows}


# ------------------------------------------------------------------ notebooks

# Each notebook is a list of (cell_type, source, daswow_labels).
# Sources are authored to exercise the statement scanner: magics, shell
# lines, triple-quoted strings, decorators, classes, match statements,
# f-strings, continuations, semicolons, inline compound bodies, and one
# deliberately broken cell.

NOTEBOOKS = {
    "telco_churn.ipynb": [
        ("markdown", "# Telco customer churn\nEnd-to-end churn classification.", []),
        ("code",
         "import pandas as pd\nimport numpy as np\n%matplotlib inline\n"
         "import matplotlib.pyplot as plt\nfrom sklearn.model_selection import train_test_split",
         ["load_data"]),
        ("code",
         "df = pd.read_csv('data/telco_churn.csv')\ndf.head()",
         ["load_data"]),
        ("code",
         "# basic shape and dtypes\nprint(f\"rows={len(df)} cols={df.shape[1]}\")\ndf.info()",
         ["data_exploration"]),
        ("code",
         "df = df.dropna(subset=['TotalCharges'])\n"
         "df['TotalCharges'] = pd.to_numeric(df['TotalCharges'], errors='coerce')\n"
         "df = df.drop_duplicates()",
         ["data_preprocessing"]),
        ("code",
         "churn_rate = df['Churn'].value_counts(normalize=True)\n"
         "churn_rate.plot(kind='bar'); plt.title('Churn balance'); plt.show()",
         ["data_exploration", "result_visualization"]),
        ("code",
         "from sklearn.preprocessing import OneHotEncoder, StandardScaler\n"
         "numeric = ['tenure', 'MonthlyCharges', 'TotalCharges']\n"
         "scaler = StandardScaler()\n"
         "df[numeric] = scaler.fit_transform(df[numeric])",
         ["data_preprocessing"]),
        ("code",
         "X = pd.get_dummies(df.drop(columns=['Churn', 'customerID']))\n"
         "y = (df['Churn'] == 'Yes').astype(int)\n"
         "X_train, X_test, y_train, y_test = train_test_split(\n"
         "    X, y,\n"
         "    test_size=0.2,\n"
         "    random_state=42,\n"
         ")",
         ["data_preprocessing"]),
        ("code",
         "from sklearn.ensemble import RandomForestClassifier\n"
         "clf = RandomForestClassifier(n_estimators=300, max_depth=8, random_state=42)\n"
         "clf.fit(X_train, y_train)",
         ["modelling"]),
        ("code",
         "from sklearn.metrics import accuracy_score, f1_score, confusion_matrix\n"
         "pred = clf.predict(X_test)\n"
         "print('acc', accuracy_score(y_test, pred))\n"
         "print('f1', f1_score(y_test, pred))\n"
         "confusion_matrix(y_test, pred)",
         ["model_evaluation", "model_prediction"]),
        ("markdown", "## Persistence", []),
        ("code",
         "import joblib\njoblib.dump(clf, 'artifacts/churn_rf.joblib')\n"
         "pd.DataFrame({'pred': pred}).to_csv('artifacts/churn_predictions.csv')",
         ["save_results"]),
    ],
    "housing_prices.ipynb": [
        ("markdown", "# California housing regression", []),
        ("code",
         "from sklearn.datasets import fetch_california_housing\n"
         "import pandas as pd\n"
         "raw = fetch_california_housing(as_frame=True)\n"
         "housing = raw.frame",
         ["load_data"]),
        ("code",
         "housing.describe()",
         ["data_exploration"]),
        ("code",
         "corr = housing.corr()\n"
         "corr['MedHouseVal'].sort_values(ascending=False)",
         ["data_exploration"]),
        ("code",
         "# cap outliers at the 99th percentile\n"
         "cap = housing['AveRooms'].quantile(0.99)\n"
         "housing['AveRooms'] = housing['AveRooms'].clip(upper=cap)",
         ["data_preprocessing"]),
        ("code",
         "def add_ratios(frame):\n"
         "    \"\"\"Derived per-household ratios.\n\n"
         "    Keeps raw columns untouched.\n"
         "    \"\"\"\n"
         "    frame = frame.copy()\n"
         "    frame['rooms_per_person'] = frame['AveRooms'] / frame['AveOccup']\n"
         "    return frame\n\n"
         "housing = add_ratios(housing)",
         ["helper_functions", "data_preprocessing"]),
        ("code",
         "from sklearn.linear_model import LinearRegression\n"
         "from sklearn.model_selection import train_test_split\n"
         "X = housing.drop(columns=['MedHouseVal']); y = housing['MedHouseVal']\n"
         "X_train, X_test, y_train, y_test = train_test_split(X, y, random_state=7)\n"
         "reg = LinearRegression()\n"
         "reg.fit(X_train, y_train)",
         ["modelling"]),
        ("code",
         "from sklearn.metrics import mean_squared_error, r2_score\n"
         "y_hat = reg.predict(X_test)\n"
         "rmse = mean_squared_error(y_test, y_hat) ** 0.5\n"
         "print(f'rmse={rmse:.3f} r2={r2_score(y_test, y_hat):.3f}')",
         ["model_evaluation", "model_prediction"]),
        ("code",
         "import matplotlib.pyplot as plt\n"
         "plt.scatter(y_test, y_hat, s=4, alpha=0.4)\n"
         "plt.xlabel('actual'); plt.ylabel('predicted')\n"
         "plt.savefig('artifacts/housing_fit.png')",
         ["result_visualization", "save_results"]),
    ],
    "iris_species.ipynb": [
        ("markdown", "# Iris species classification\nSmall multiclass example.", []),
        ("code",
         "from sklearn.datasets import load_iris\n"
         "iris = load_iris(as_frame=True)\n"
         "frame = iris.frame",
         ["load_data"]),
        ("code",
         "frame.groupby('target').agg(['mean', 'std'])",
         ["data_exploration"]),
        ("code",
         "from sklearn.preprocessing import StandardScaler\n"
         "features = frame.drop(columns='target')\n"
         "scaled = StandardScaler().fit_transform(features)",
         ["data_preprocessing"]),
        ("code",
         "from sklearn.model_selection import cross_val_score\n"
         "from sklearn.neighbors import KNeighborsClassifier\n"
         "for k in (1, 3, 5, 7):\n"
         "    knn = KNeighborsClassifier(n_neighbors=k)\n"
         "    scores = cross_val_score(knn, scaled, frame['target'], cv=5)\n"
         "    print(k, scores.mean())",
         ["modelling", "model_evaluation"]),
        ("code",
         "best = KNeighborsClassifier(n_neighbors=5)\n"
         "best.fit(scaled, frame['target'])",
         ["modelling"]),
        ("code",
         "new_flowers = [[5.1, 3.5, 1.4, 0.2], [6.7, 3.0, 5.2, 2.3]]\n"
         "species = best.predict(new_flowers)\n"
         "print(species)",
         ["model_prediction"]),
        ("code",
         "# Notes for the next reviewer:\n"
         "# - k=5 chosen by cross-validation above\n"
         "# - scaling matters for KNN distances",
         ["comment_only"]),
    ],
    "imdb_sentiment.ipynb": [
        ("markdown", "# IMDB review sentiment", []),
        ("code",
         "!pip install -q scikit-learn\n"
         "import pandas as pd\n"
         "reviews = pd.read_json('data/imdb_reviews.json', lines=True)",
         ["load_data"]),
        ("code",
         "def normalize_text(text):\n"
         "    text = text.lower().strip()\n"
         "    for token in ('<br />', '\\t'):\n"
         "        text = text.replace(token, ' ')\n"
         "    return text\n\n"
         "reviews['clean'] = reviews['text'].map(normalize_text)",
         ["helper_functions", "data_preprocessing"]),
        ("code",
         "lengths = reviews['clean'].str.len()\n"
         "lengths.hist(bins=40)",
         ["data_exploration"]),
        ("code",
         "from sklearn.feature_extraction.text import TfidfVectorizer\n"
         "vectorizer = TfidfVectorizer(max_features=20000, ngram_range=(1, 2))\n"
         "X = vectorizer.fit_transform(reviews['clean'])\n"
         "y = reviews['label']",
         ["data_preprocessing"]),
        ("code",
         "from sklearn.linear_model import LogisticRegression\n"
         "from sklearn.model_selection import GridSearchCV\n"
         "grid = GridSearchCV(\n"
         "    LogisticRegression(max_iter=2000),\n"
         "    {'C': [0.1, 1.0, 10.0]},\n"
         "    cv=3,\n"
         "    scoring='f1',\n"
         ")\n"
         "grid.fit(X, y)",
         ["modelling"]),
        ("code",
         "print(grid.best_params_)\n"
         "report = grid.cv_results_['mean_test_score']\n"
         "print(report)",
         ["model_evaluation"]),
        ("code",
         "samples = ['a wonderful quiet film', 'dull and far too long']\n"
         "probs = grid.predict_proba(vectorizer.transform(samples))\n"
         "for text, p in zip(samples, probs):\n"
         "    print(f'{text!r}: positive={p[1]:.2f}')",
         ["model_prediction"]),
        ("code",
         "import pickle\n"
         "with open('artifacts/sentiment.pkl', 'wb') as fh:\n"
         "    pickle.dump({'model': grid.best_estimator_, 'vec': vectorizer}, fh)",
         ["save_results"]),
    ],
    "store_sales.ipynb": [
        ("markdown", "# Store sales forecasting\nWeekly aggregation and a seasonal baseline.", []),
        ("code",
         "import pandas as pd\n"
         "sales = pd.read_parquet('data/store_sales.parquet')\n"
         "calendar = pd.read_csv('data/calendar.csv', parse_dates=['date'])",
         ["load_data"]),
        ("code",
         "sales = sales.merge(calendar, on='date', how='left')\n"
         "weekly = sales.resample('W', on='date').agg({'units': 'sum', 'price': 'mean'})\n"
         "weekly = weekly.fillna(method='ffill')",
         ["data_preprocessing"]),
        ("code",
         "weekly['units'].plot(title='Weekly units')",
         ["data_exploration"]),
        ("code",
         "class SeasonalNaive:\n"
         "    \"\"\"Repeats the value from `period` steps back.\"\"\"\n\n"
         "    def __init__(self, period=52):\n"
         "        self.period = period\n\n"
         "    def fit(self, series):\n"
         "        self.history = series.copy()\n"
         "        return self\n\n"
         "    def predict(self, steps):\n"
         "        tail = self.history[-self.period:]\n"
         "        reps = steps // self.period + 1\n"
         "        return pd.concat([tail] * reps)[:steps]",
         ["helper_functions", "modelling"]),
        ("code",
         "model = SeasonalNaive(period=52)\n"
         "model.fit(weekly['units'][:-8])\n"
         "forecast = model.predict(8)",
         ["modelling", "model_prediction"]),
        ("code",
         "def broken(:\n"
         "    return None",
         []),
        ("code",
         "from sklearn.metrics import mean_absolute_error\n"
         "mae = mean_absolute_error(weekly['units'][-8:], forecast)\n"
         "baseline = weekly['units'].diff().abs().mean()\n"
         "print(f'mae={mae:.1f} naive_baseline={baseline:.1f}')",
         ["model_evaluation"]),
        ("code",
         "season = 'high' if mae < baseline else 'low'\n"
         "match season:\n"
         "    case 'high':\n"
         "        verdict = 'seasonal structure captured'\n"
         "    case _:\n"
         "        verdict = 'no better than naive'\n"
         "print(verdict)",
         ["model_evaluation"]),
        ("code",
         "forecast.to_csv('artifacts/sales_forecast.csv')",
         ["save_results"]),
    ],
    "digits_vision.ipynb": [
        ("markdown", "# Digit recognition\nClassic small-image classification.", []),
        ("code",
         "from sklearn.datasets import load_digits\n"
         "import numpy as np\n"
         "digits = load_digits()\n"
         "images, target = digits.images, digits.target",
         ["load_data"]),
        ("code",
         "import matplotlib.pyplot as plt\n"
         "fig, axes = plt.subplots(1, 6, figsize=(9, 2))\n"
         "for ax, img, lab in zip(axes, images[:6], target[:6]):\n"
         "    ax.imshow(img, cmap='gray'); ax.set_title(lab); ax.axis('off')",
         ["data_exploration", "result_visualization"]),
        ("code",
         "flat = images.reshape(len(images), -1)\n"
         "flat = flat / 16.0",
         ["data_preprocessing"]),
        ("code",
         "import functools\n\n"
         "@functools.lru_cache(maxsize=None)\n"
         "def grid_for(name):\n"
         "    grids = {\n"
         "        'svc': {'C': [1, 10], 'gamma': ['scale', 0.01]},\n"
         "        'tree': {'max_depth': [4, 8, 16]},\n"
         "    }\n"
         "    return tuple(sorted(grids[name].items()))",
         ["helper_functions"]),
        ("code",
         "from sklearn.svm import SVC\n"
         "from sklearn.model_selection import train_test_split\n"
         "X_train, X_test, y_train, y_test = \\\n"
         "    train_test_split(flat, target, random_state=0)\n"
         "svc = SVC(C=10, gamma='scale')\n"
         "svc.fit(X_train, y_train)",
         ["modelling"]),
        ("code",
         "from sklearn.metrics import classification_report\n"
         "guesses = svc.predict(X_test)\n"
         "print(classification_report(y_test, guesses))",
         ["model_evaluation", "model_prediction"]),
        ("code",
         "wrong = np.where(guesses != y_test)[0][:6]\n"
         "fig, axes = plt.subplots(1, len(wrong), figsize=(9, 2))\n"
         "for ax, idx in zip(axes, wrong):\n"
         "    ax.imshow(X_test[idx].reshape(8, 8), cmap='gray')\n"
         "    ax.set_title(f'{guesses[idx]}!={y_test[idx]}'); ax.axis('off')\n"
         "plt.savefig('artifacts/digit_mistakes.png')",
         ["result_visualization", "save_results"]),
        ("code",
         "np.savez('artifacts/digit_model_inputs.npz', X=flat, y=target)",
         ["save_results"]),
    ],
}


def source_lines(source):
    lines = source.split("\n")
    out = [line + "\n" for line in lines[:-1]]
    out.append(lines[-1])
    return out


def gen_notebooks():
    code_cells = 0
    for name, cells in NOTEBOOKS.items():
        nb_cells = []
        for cell_type, source, _ in cells:
            cell = {
                "cell_type": cell_type,
                "metadata": {},
                "source": source_lines(source),
            }
            if cell_type == "code":
                cell["outputs"] = []
                cell["execution_count"] = None
                code_cells += 1
            nb_cells.append(cell)
        body = {
            "nbformat": 4,
            "nbformat_minor": 5,
            "metadata": {
                "kernelspec": {"name": "python3", "display_name": "Python 3"},
                "language_info": {"name": "python", "version": "3.11.8"},
            },
            "cells": nb_cells,
        }
        write(os.path.join("notebooks", name), json.dumps(body, indent=1) + "\n")
    assert code_cells >= 50, f"corpus has only {code_cells} code cells"
    print(f"corpus code cells: {code_cells}")


def meta_for(text, cell_type, index, total, rng):
    lines = text.split("\n")
    return [
        str(rng.randint(1, 40)) if cell_type == "code" else "",
        str(len(lines)),
        str(len(text)),
        str(len(text.split())),
        str(rng.randint(0, 1)),
        str(sum(1 for l in lines if l.lstrip().startswith(("import ", "from ")))),
        str(sum(1 for l in lines if l.lstrip().startswith("def "))),
        str(text.count("(")),
        str(int("pd." in text or "pandas" in text)),
        str(int("np." in text or "numpy" in text)),
        str(int("sklearn" in text)),
        str(int("plt." in text or "matplotlib" in text)),
        str(sum(1 for l in lines if l.lstrip().startswith("#"))),
        str(sum(1 for l in lines if l.lstrip().startswith(("%", "!")))),
        str(text.count("#") if cell_type == "markdown" and text.startswith("#") else 0),
        f"{index / max(total - 1, 1):.2f}",
        rng.choice(["none", "stream", "display_data", "execute_result"]),
        str(rng.randint(3, 2500)),
    ]


def gen_corpus_labels():
    rng = random.Random(411)
    rows = [LABEL_HEADER]
    for name, cells in sorted(NOTEBOOKS.items()):
        total = len(cells)
        for index, (cell_type, source, labels) in enumerate(cells):
            flags = ["1" if s in labels else "0" for s in DASWOW_STAGES]
            rows.append(
                [name, str(index), cell_type, source]
                + flags
                + meta_for(source, cell_type, index, total, rng)
            )
    buf = []
    writer = csv.writer(
        _ListWriter(buf), quoting=csv.QUOTE_MINIMAL, lineterminator="\n"
    )
    for row in rows:
        writer.writerow(row)
    write("labels/corpus_labels.csv", "".join(buf))


class _ListWriter:
    def __init__(self, buf):
        self.buf = buf

    def write(self, s):
        self.buf.append(s)


# Snippet pools for the large synthetic table, keyed by stage.
SNIPPETS = {
    "load_data": [
        "df = pd.read_csv('data/{n}.csv')",
        "frame = pd.read_parquet('input/{n}.parquet')",
        "raw = pd.read_json('dumps/{n}.json', lines=True)",
        "data = np.loadtxt('arrays/{n}.txt')",
        "table = pd.read_excel('sheets/{n}.xlsx', sheet_name=0)",
    ],
    "helper_functions": [
        "def as_percent_{n}(x):\n    return round(100 * x, 2)",
        "def bucket_{n}(value, edges):\n    return np.digitize(value, edges)",
        "def memo_{n}(fn):\n    cache = {{}}\n    def inner(k):\n        if k not in cache:\n            cache[k] = fn(k)\n        return cache[k]\n    return inner",
    ],
    "data_preprocessing": [
        "df = df.dropna(subset=['col_{n}'])",
        "df['col_{n}'] = df['col_{n}'].fillna(0)",
        "df = df.drop_duplicates().reset_index(drop=True)",
        "df['col_{n}'] = pd.to_numeric(df['col_{n}'], errors='coerce')",
        "X_train, X_test, y_train, y_test = train_test_split(X, y, random_state={n})",
    ],
    "data_exploration": [
        "df.describe()",
        "df['col_{n}'].value_counts().head(10)",
        "df.corr()['target'].sort_values()",
        "df['col_{n}'].hist(bins=30)",
        "print(df.shape, df.isnull().sum().sum())",
    ],
    "modelling": [
        "model = RandomForestClassifier(n_estimators={n})\nmodel.fit(X_train, y_train)",
        "reg = LinearRegression()\nreg.fit(X_train, y_train)",
        "clf = LogisticRegression(C={n}.0, max_iter=1000)\nclf.fit(X_train, y_train)",
        "km = KMeans(n_clusters={k})\nkm.fit(features)",
    ],
    "model_evaluation": [
        "print(accuracy_score(y_test, pred))",
        "print(classification_report(y_test, pred))",
        "scores = cross_val_score(model, X, y, cv={k})\nprint(scores.mean())",
        "print('rmse', mean_squared_error(y_test, pred) ** 0.5)",
    ],
    "model_prediction": [
        "pred = model.predict(X_test)",
        "probs = clf.predict_proba(X_new)",
        "forecast = model.predict(horizon_{n})",
    ],
    "result_visualization": [
        "plt.plot(history_{n}); plt.show()",
        "plt.scatter(y_test, pred, s=4)\nplt.xlabel('actual'); plt.ylabel('pred')",
        "sns.heatmap(confusion, annot=True)",
    ],
    "save_results": [
        "df.to_csv('out/result_{n}.csv', index=False)",
        "joblib.dump(model, 'models/model_{n}.joblib')",
        "plt.savefig('figures/fig_{n}.png', dpi=150)",
    ],
    "comment_only": [
        "# TODO: revisit the threshold choice",
        "# data dictionary lives in docs/schema_{n}.md",
        "# NOTE: run the cell above twice after a kernel restart",
    ],
}

MARKDOWN_SNIPPETS = [
    "# Experiment {n}",
    "## Step {n}: feature review",
    "Observations from run {n}: the validation gap narrowed.",
    "### Data notes\nColumn dictionary for batch {n}.",
]


def gen_daswow_cells():
    rng = random.Random(20260819)
    rows = [LABEL_HEADER]
    produced = 0
    nb_index = 0
    target_rows = 1918
    while produced < target_rows:
        nb_index += 1
        filename = f"nb_{nb_index:04d}.ipynb"
        n_cells = min(rng.randint(8, 24), target_rows - produced)
        for index in range(n_cells):
            n = rng.randint(1, 99)
            k = rng.randint(2, 9)
            roll = rng.random()
            if roll < 0.13:
                cell_type = "markdown"
                text = rng.choice(MARKDOWN_SNIPPETS).format(n=n)
                labels = []
            else:
                cell_type = "code"
                stage = rng.choice(DASWOW_STAGES)
                text = rng.choice(SNIPPETS[stage]).format(n=n, k=k)
                labels = [stage]
                if rng.random() < 0.08:
                    extra = rng.choice(DASWOW_STAGES)
                    if extra not in labels:
                        labels.append(extra)
            if rng.random() < 0.03:
                labels = []
            flags = ["1" if s in labels else "0" for s in DASWOW_STAGES]
            rows.append(
                [filename, str(index), cell_type, text]
                + flags
                + meta_for(text, cell_type, index, n_cells, rng)
            )
            produced += 1
    assert produced == target_rows
    buf = []
    writer = csv.writer(
        _ListWriter(buf), quoting=csv.QUOTE_MINIMAL, lineterminator="\n"
    )
    for row in rows:
        writer.writerow(row)
    write("labels/daswow_cells.csv", "".join(buf))


# ------------------------------------------------------------------- prompts

PROMPT = '''id = "baseline"
version = "1"
technique = "zero-shot"
---
You are labeling one instruction from a Jupyter notebook with the
machine-learning pipeline stage it belongs to.

Stages:
{{taxonomy}}

Full notebook code:
{{notebook}}

Instruction to classify:
{{instruction}}

Reply with exactly one stage name from the list and nothing else.
'''

# -------------------------------------------------------------- references

REFERENCES = '''# Published stage distributions used as chi-squared baselines.
# `values` are proportions; the comparison rescales them to the observed
# total before testing.

[[reference]]
name = "survey_instruction_mix"
taxonomy = "unified-v1"
source = "instruction_frequencies"
categories = [
    "Data Acquisition",
    "Data Preparation",
    "Data Exploration",
    "Feature Engineering",
    "Modeling",
    "Evaluation",
    "Prediction",
    "Deployment",
    "Monitoring",
    "helper_functions",
    "comment_only",
]
values = [0.08, 0.22, 0.16, 0.07, 0.17, 0.12, 0.05, 0.06, 0.01, 0.04, 0.02]

[[reference]]
name = "survey_cell_mix_source_side"
taxonomy = "dspipelines"
source = "cell_frequencies"
categories = [
    "Data Acquisition",
    "Data Preparation",
    "Data Exploration",
    "Feature Engineering",
    "Modeling",
    "Training",
    "Evaluation",
    "Prediction",
    "Interpretation",
    "Deployment",
    "Monitoring",
]
values = [0.09, 0.20, 0.13, 0.08, 0.11, 0.09, 0.12, 0.06, 0.05, 0.05, 0.02]
'''

# ----------------------------------------------------------------- configs

CONFIGS = {
    "unify.toml": '''[unify]
taxonomy_a = "../taxonomies/dspipelines.toml"
taxonomy_b = "../taxonomies/daswow.toml"
cross_mapping = "../taxonomies/cross_mapping.toml"
version = "unified-v1"
output_dir = "out"
''',
    "mutate.toml": '''[mutate]
taxonomy = "out/unified.toml"
synonyms = "../taxonomies/synonyms.toml"
output_dir = "out"
''',
    "classify_rule.toml": '''[classify]
backend = "rule"
notebook_dir = "../notebooks"
taxonomy = "out/unified.toml"
stages_csv = "../mapping/stages.csv"
stage_codes = "../mapping/stage_codes.toml"
output_dir = "out_rule"
parallelism = 4
''',
    "classify_replay.toml": '''[classify]
backend = "slm"
notebook_dir = "../notebooks"
taxonomy = "out/unified.toml"
template = "../prompts/baseline.prompt"
output_dir = "out"
parallelism = 4

[classify.decoding]
temperature = 0.0
top_p = 1.0
max_tokens = 8
logprobs = true

[classify.endpoint]
base_url = "http://replay.invalid"
model = "stagekit-test-7b"
timeout_ms = 30000
mode = "replay"
cassette_path = "../cassettes/baseline.jsonl"
''',
    "evaluate.toml": '''[evaluate]
predictions = "out/predictions.jsonl"
compare_with = ["out_rule/predictions.jsonl"]
taxonomy = "out/unified.toml"
truth = "../labels/corpus_labels.csv"
truth_taxonomy = "../taxonomies/daswow.toml"
notebook_dir = "../notebooks"
output_dir = "out"
alpha = 0.05
''',
    "insights.toml": '''[insights]
predictions = "out/predictions.jsonl"
taxonomy = "out/unified.toml"
output_dir = "out"
collapse_self = true
boundaries = false
pattern_length = 3
min_support = 2
alpha = 0.05
references = "../reference/distributions.toml"
''',
    "report.toml": '''[report]
evaluation = "out/evaluation.toml"
insights = "out/insights.toml"
output_dir = "out"
''',
}


def main():
    write("taxonomies/dspipelines.toml", DSPIPELINES_TOML)
    write("taxonomies/daswow.toml", DASWOW_TOML)
    write("taxonomies/cross_mapping.toml", CROSS_MAPPING_TOML)
    write("taxonomies/synonyms.toml", SYNONYMS_TOML)
    write("taxonomies/synonyms_overbudget.toml", SYNONYMS_OVERBUDGET_TOML)
    write("mapping/stage_codes.toml", STAGE_CODES_TOML)
    mapped = gen_stages_csv()
    gen_notebooks()
    gen_corpus_labels()
    gen_daswow_cells()
    write("prompts/baseline.prompt", PROMPT)
    write("reference/distributions.toml", REFERENCES)
    for name, body in CONFIGS.items():
        write(os.path.join("configs", name), body)

    # Sanity: every notebook calls at least one mapped name, so the rule
    # backend produces non-None labels on the corpus.
    import re

    for name, cells in NOTEBOOKS.items():
        hits = 0
        for cell_type, source, _ in cells:
            if cell_type != "code":
                continue
            for m in re.finditer(r"([A-Za-z_][A-Za-z0-9_]*)\s*\(", source):
                if m.group(1) in mapped:
                    hits += 1
        assert hits > 0, f"{name} never calls a mapped name"
    print("ok")


if __name__ == "__main__":
    main()
