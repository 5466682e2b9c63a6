"""
MaxEnt (multinomial logistic regression) baseline over bag-of-words counts,
evaluation metrics and inter-annotator agreement
"""
import json
import logging
import math
import re
import unicodedata
from collections import Counter
from dataclasses import asdict, dataclass, field
from itertools import combinations
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import sparse
from sklearn.feature_extraction.text import CountVectorizer
from sklearn.metrics import (
    accuracy_score,
    cohen_kappa_score,
    confusion_matrix,
    f1_score,
    precision_recall_fscore_support,
)

from config.taxonomy import Aspect, Sentiment
from src.errors import ConvergenceError, DataValidationError, InsufficientDataError, SplitLeakageError

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1
MIN_TOKEN_LENGTH = 3
DEFAULT_MIN_DF = 2
MAX_HALVINGS = 40

_LATIN = re.compile(r"[A-Za-z]")

TASK_LABELS = {
    "aspect": tuple(a.value for a in Aspect),
    "sentiment": tuple(s.value for s in Sentiment),
}


@dataclass(frozen=True)
class TokenizedDocument:
    doc_id: str
    tokens: Tuple[str, ...]
    aspect: Optional[str] = None
    sentiment: Optional[str] = None
    pairs: Tuple[Tuple[str, str], ...] = ()

    @classmethod
    def from_record(cls, record: Mapping, path: Optional[str] = None) -> "TokenizedDocument":
        line = record.get("_line")
        if "id" not in record or "tokens" not in record:
            raise DataValidationError("record needs 'id' and 'tokens'", path=path, line=line)
        tokens = record["tokens"]
        if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
            raise DataValidationError("'tokens' must be a list of strings", path=path, line=line)
        pairs = ()
        if "pairs" in record:
            try:
                pairs = tuple((str(p["aspect"]), str(p["sentiment"])) for p in record["pairs"])
            except (KeyError, TypeError):
                raise DataValidationError("each pair needs 'aspect' and 'sentiment'", path=path, line=line)
        aspect = record.get("aspect")
        sentiment = record.get("sentiment")
        for value, allowed, name in ((aspect, TASK_LABELS["aspect"], "aspect"),
                                     (sentiment, TASK_LABELS["sentiment"], "sentiment")):
            if value is not None and value not in allowed:
                raise DataValidationError(f"unknown {name} label {value!r}", path=path, line=line)
        for a, s in pairs:
            if a not in TASK_LABELS["aspect"] or s not in TASK_LABELS["sentiment"]:
                raise DataValidationError(f"unknown label pair ({a!r}, {s!r})", path=path, line=line)
        return cls(str(record["id"]), tuple(tokens), aspect, sentiment, pairs)

    def labels(self, task: str) -> List[str]:
        """Gold labels for a task: one per aspect-sentiment pair, or the single field"""
        if self.pairs:
            index = 0 if task == "aspect" else 1
            return [p[index] for p in self.pairs]
        value = self.aspect if task == "aspect" else self.sentiment
        return [value] if value is not None else []


@dataclass(frozen=True)
class Vocabulary:
    index: Dict[str, int]

    def __post_init__(self):
        if sorted(self.index.values()) != list(range(len(self.index))):
            raise ValueError("vocabulary indices must be dense from 0")

    @property
    def size(self) -> int:
        return len(self.index)

    def __contains__(self, token: str) -> bool:
        return token in self.index


@dataclass(frozen=True)
class MaxEntHyperparams:
    learning_rate: float = 0.1
    l2: float = 1e-4
    epochs: int = 100


@dataclass
class MaxEntModel:
    # rows are classes; the last column is the bias
    weights: np.ndarray
    classes: Tuple[str, ...]
    vocabulary: Vocabulary
    hyperparams: MaxEntHyperparams
    loss_history: List[float] = field(default_factory=list)

    def __post_init__(self):
        if self.weights.shape != (len(self.classes), self.vocabulary.size + 1):
            raise ValueError(f"weights have shape {self.weights.shape}, expected "
                             f"({len(self.classes)}, {self.vocabulary.size + 1})")
        if not np.all(np.isfinite(self.weights)):
            raise ConvergenceError("model weights are not finite")


@dataclass
class Prediction:
    label: str
    probabilities: np.ndarray


@dataclass
class EvalReport:
    per_class: pd.DataFrame
    accuracy: float
    micro_f1: float
    macro_f1: float
    weighted_f1: float
    confusion: pd.DataFrame

    def summary_rows(self) -> pd.DataFrame:
        rows = [{"label": "accuracy", "f1": self.accuracy}, {"label": "micro avg", "f1": self.micro_f1},
                {"label": "macro avg", "f1": self.macro_f1}, {"label": "weighted avg", "f1": self.weighted_f1}]
        return pd.DataFrame(rows)


@dataclass(frozen=True)
class KappaResult:
    kappa: float
    observed: float
    expected: float
    n: int
    degenerate: bool = False

    @property
    def agreement(self) -> str:
        return landis_koch_band(self.kappa)


def whitespace_tokenize(text: str) -> List[str]:
    return text.split()


def _is_punctuation(token: str) -> bool:
    return all(unicodedata.category(ch)[0] in "PSZ" or ch.isspace() for ch in token)


def preprocess(tokens: Iterable[str]) -> List[str]:
    """Drop punctuation-only, Latin-letter, digit-bearing and shorter-than-3 tokens"""
    kept = []
    for token in tokens:
        token = token.strip()
        if len(token) < MIN_TOKEN_LENGTH:
            continue
        if _is_punctuation(token):
            continue
        if _LATIN.search(token):
            continue
        if any(ch.isdigit() or unicodedata.category(ch) == "Nd" for ch in token):
            continue
        kept.append(token)
    return kept


def _as_is(tokens: Sequence[str]) -> Sequence[str]:
    return tokens


def _count_vectorizer(vocabulary: Optional[Mapping[str, int]] = None, min_df: int = 1) -> CountVectorizer:
    # tokens arrive already split and filtered by preprocess()
    return CountVectorizer(analyzer=_as_is, token_pattern=None, min_df=min_df, vocabulary=vocabulary,
                           dtype=np.float64)


def build_vocabulary(token_lists: Iterable[Sequence[str]], min_df: int = DEFAULT_MIN_DF) -> Vocabulary:
    """Tokens occurring in at least `min_df` documents, indexed in sorted order"""
    vectorizer = _count_vectorizer(min_df=min_df)
    try:
        vectorizer.fit([list(tokens) for tokens in token_lists])
    except ValueError:
        # no token reaches min_df, or there are fewer documents than min_df
        return Vocabulary({})
    return Vocabulary({t: int(i) for t, i in vectorizer.vocabulary_.items()})


def vectorize(tokens: Sequence[str], vocab: Vocabulary) -> Tuple[sparse.csr_matrix, int]:
    """Count vector (1 x vocab size) and the number of out-of-vocabulary tokens dropped"""
    oov = sum(1 for t in tokens if t not in vocab.index)
    return vectorize_corpus([tokens], vocab), oov


def vectorize_corpus(token_lists: Sequence[Sequence[str]], vocab: Vocabulary) -> sparse.csr_matrix:
    if not token_lists or vocab.size == 0:
        return sparse.csr_matrix((len(token_lists), vocab.size))
    counts = _count_vectorizer(vocabulary=vocab.index).transform([list(tokens) for tokens in token_lists])
    return sparse.csr_matrix(counts)


def _with_bias(X: sparse.spmatrix) -> sparse.csr_matrix:
    return sparse.hstack([X, np.ones((X.shape[0], 1))], format="csr")


def _softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def loss_and_gradient(weights: np.ndarray, Xb: sparse.csr_matrix, Y: np.ndarray, l2: float
                      ) -> Tuple[float, np.ndarray]:
    """
    Mean multinomial cross-entropy plus (l2/2)||W||^2 over the non-bias weights.

    Xb carries the bias column last; Y is one-hot (n x classes).
    """
    n = Xb.shape[0]
    scores = np.asarray(Xb @ weights.T)
    shifted = scores - scores.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    log_probs = shifted - log_norm[:, None]
    penalized = weights[:, :-1]
    loss = -float(np.sum(Y * log_probs)) / n + 0.5 * l2 * float(np.sum(penalized ** 2))
    residual = np.exp(log_probs) - Y
    gradient = np.asarray((Xb.T @ residual).T) / n
    gradient[:, :-1] += l2 * penalized
    return loss, gradient


def train_maxent(X: sparse.spmatrix, labels: Sequence[str], classes: Sequence[str], vocab: Vocabulary,
                 hyperparams: MaxEntHyperparams = MaxEntHyperparams()) -> MaxEntModel:
    """
    Full-batch gradient descent from zero weights.

    A step that would raise the loss is retried with half the learning rate,
    so the recorded training loss never increases.
    """
    classes = tuple(classes)
    if X.shape[0] != len(labels):
        raise ValueError(f"{X.shape[0]} rows but {len(labels)} labels")
    unknown = set(labels) - set(classes)
    if unknown:
        raise DataValidationError(f"labels outside the class list: {sorted(unknown)}")
    if len(set(labels)) < 2:
        raise InsufficientDataError("training needs at least two classes present")
    if X.shape[0] == 0 or X.nnz == 0:
        raise InsufficientDataError("training vectors are empty")

    Xb = _with_bias(sparse.csr_matrix(X, dtype=float))
    Y = np.zeros((len(labels), len(classes)))
    Y[np.arange(len(labels)), [classes.index(label) for label in labels]] = 1.0

    weights = np.zeros((len(classes), Xb.shape[1]))
    loss, gradient = loss_and_gradient(weights, Xb, Y, hyperparams.l2)
    history = [loss]
    rate = hyperparams.learning_rate
    for epoch in range(hyperparams.epochs):
        for _ in range(MAX_HALVINGS):
            candidate = weights - rate * gradient
            new_loss, new_gradient = loss_and_gradient(candidate, Xb, Y, hyperparams.l2)
            if not math.isfinite(new_loss):
                raise ConvergenceError(f"loss became {new_loss} at epoch {epoch}")
            if new_loss <= loss:
                break
            rate /= 2.0
        else:
            logger.info("Stopping at epoch %d: no decreasing step found", epoch)
            break
        weights, loss, gradient = candidate, new_loss, new_gradient
        history.append(loss)
    logger.info("MaxEnt trained: %d epochs, final loss %.6f", len(history) - 1, loss)
    return MaxEntModel(weights, classes, vocab, hyperparams, history)


def predict_vector(model: MaxEntModel, vector: sparse.spmatrix) -> Prediction:
    scores = np.asarray(_with_bias(sparse.csr_matrix(vector, dtype=float)) @ model.weights.T)
    probabilities = _softmax(scores)[0]
    # argmax returns the lowest index on ties
    return Prediction(model.classes[int(np.argmax(probabilities))], probabilities)


def predict(model: MaxEntModel, tokens: Sequence[str]) -> Prediction:
    vector, _ = vectorize(preprocess(tokens), model.vocabulary)
    return predict_vector(model, vector)


def evaluate(predictions: Sequence[str], gold: Sequence[str], labels: Sequence[str]) -> EvalReport:
    """
    Per-class precision / recall / F1 plus accuracy and micro, macro and
    support-weighted F1.

    A class absent from both gold and predictions gets F1 = 0 and is flagged
    degenerate; macro F1 averages over the other classes.
    """
    if len(predictions) != len(gold):
        raise ValueError(f"{len(predictions)} predictions for {len(gold)} gold labels")
    labels = list(labels)
    unknown = (set(predictions) | set(gold)) - set(labels)
    if unknown:
        raise DataValidationError(f"labels outside the enumeration: {sorted(unknown)}")
    n = len(gold)
    if n == 0:
        empty = np.zeros((len(labels), len(labels)), dtype=int)
        per_class = pd.DataFrame({"label": labels, "precision": 0.0, "recall": 0.0, "f1": 0.0, "support": 0,
                                  "degenerate": True})
        return EvalReport(per_class, 0.0, 0.0, 0.0, 0.0, pd.DataFrame(empty, index=labels, columns=labels))

    gold, predictions = list(gold), list(predictions)
    confusion = confusion_matrix(gold, predictions, labels=labels)
    precision, recall, f1, support = precision_recall_fscore_support(
        gold, predictions, labels=labels, average=None, zero_division=0)
    predicted = confusion.sum(axis=0)
    per_class = pd.DataFrame({
        "label": labels,
        "precision": precision.astype(float),
        "recall": recall.astype(float),
        "f1": f1.astype(float),
        "support": support.astype(int),
        "degenerate": (support == 0) & (predicted == 0),
    })

    active = per_class[~per_class["degenerate"]]
    macro_f1 = float(active["f1"].mean()) if len(active) else 0.0
    return EvalReport(
        per_class,
        float(accuracy_score(gold, predictions)),
        float(f1_score(gold, predictions, labels=labels, average="micro", zero_division=0)),
        macro_f1,
        float(f1_score(gold, predictions, labels=labels, average="weighted", zero_division=0)),
        pd.DataFrame(confusion, index=labels, columns=labels),
    )


def landis_koch_band(kappa: float) -> str:
    if not math.isfinite(kappa):
        return "undefined"
    if kappa < 0:
        return "poor"
    if kappa <= 0.20:
        return "slight"
    if kappa <= 0.40:
        return "fair"
    if kappa <= 0.60:
        return "moderate"
    if kappa <= 0.80:
        return "substantial"
    return "almost perfect"


def cohens_kappa(labels_a: Sequence[str], labels_b: Sequence[str]) -> KappaResult:
    """kappa = (p_o - p_e) / (1 - p_e) with p_e from the product of the marginals"""
    if len(labels_a) != len(labels_b):
        raise ValueError(f"annotator sequences differ in length ({len(labels_a)} vs {len(labels_b)})")
    if not labels_a:
        raise InsufficientDataError("kappa needs at least one item")
    labels_a, labels_b = list(labels_a), list(labels_b)
    categories = sorted(set(labels_a) | set(labels_b))
    table = confusion_matrix(labels_a, labels_b, labels=categories)
    total = float(table.sum())
    observed = float(np.trace(table)) / total
    expected = float(np.dot(table.sum(axis=1) / total, table.sum(axis=0) / total))
    if expected >= 1.0:
        return KappaResult(float("nan"), observed, expected, len(labels_a), degenerate=True)
    kappa = float(cohen_kappa_score(labels_a, labels_b, labels=categories))
    return KappaResult(kappa, observed, expected, len(labels_a))


def mean_pairwise_kappa(annotations: Mapping[str, Mapping[str, str]]) -> Tuple[float, pd.DataFrame]:
    """
    Average Cohen's kappa over every annotator pair, each on the items both labelled.

    `annotations` maps annotator name to {item id: label}.
    """
    rows = []
    for a, b in combinations(sorted(annotations), 2):
        shared = sorted(set(annotations[a]) & set(annotations[b]))
        if not shared:
            continue
        result = cohens_kappa([annotations[a][i] for i in shared], [annotations[b][i] for i in shared])
        rows.append({"annotator_a": a, "annotator_b": b, "n": result.n, "kappa": result.kappa,
                     "agreement": result.agreement, "degenerate": result.degenerate})
    table = pd.DataFrame(rows, columns=["annotator_a", "annotator_b", "n", "kappa", "agreement", "degenerate"])
    valid = table.loc[~table["degenerate"], "kappa"] if len(table) else pd.Series(dtype=float)
    return (float(valid.mean()) if len(valid) else float("nan")), table


def check_splits(splits: Mapping[str, Sequence[str]], known_ids: Optional[Iterable[str]] = None):
    """Raise SplitLeakageError when an id appears in two splits"""
    owner: Dict[str, str] = {}
    for name, ids in splits.items():
        for doc_id in ids:
            if doc_id in owner and owner[doc_id] != name:
                raise SplitLeakageError(f"document {doc_id!r} is in both {owner[doc_id]!r} and {name!r}")
            owner[doc_id] = name
    if known_ids is not None:
        unknown = set(owner) - set(known_ids)
        if unknown:
            raise DataValidationError(f"split manifest lists {len(unknown)} unknown ids, e.g. {sorted(unknown)[0]!r}")


def expand_instances(documents: Sequence[TokenizedDocument], task: str) -> Tuple[List[List[str]], List[str], int]:
    """
    One (tokens, label) instance per gold label, tokens preprocessed.

    Returns the token lists, labels and the number of documents whose tokens
    were all filtered out (those are skipped).
    """
    if task not in TASK_LABELS:
        raise ValueError(f"unknown task {task!r}")
    token_lists: List[List[str]] = []
    labels: List[str] = []
    emptied = 0
    for doc in documents:
        tokens = preprocess(doc.tokens)
        if not tokens:
            emptied += 1
            continue
        for label in doc.labels(task):
            token_lists.append(tokens)
            labels.append(label)
    if emptied:
        logger.warning("%d documents had no tokens left after preprocessing", emptied)
    return token_lists, labels, emptied


def split_documents(documents: Sequence[TokenizedDocument], splits: Mapping[str, Sequence[str]]
                    ) -> Dict[str, List[TokenizedDocument]]:
    check_splits(splits, known_ids=[d.doc_id for d in documents])
    by_id = {d.doc_id: d for d in documents}
    return {name: [by_id[i] for i in ids] for name, ids in splits.items()}


def split_statistics(documents: Sequence[TokenizedDocument], splits: Mapping[str, Sequence[str]],
                     task: str) -> pd.DataFrame:
    """Label counts and within-split percentages for every split"""
    rows = []
    for name, docs in split_documents(documents, splits).items():
        counts = Counter(label for doc in docs for label in doc.labels(task))
        total = sum(counts.values())
        for label in TASK_LABELS[task]:
            rows.append({"split": name, "label": label, "count": counts.get(label, 0),
                         "percent": 100.0 * counts.get(label, 0) / total if total else 0.0})
    return pd.DataFrame(rows, columns=["split", "label", "count", "percent"])


def train_from_documents(documents: Sequence[TokenizedDocument], task: str, min_df: int = DEFAULT_MIN_DF,
                         hyperparams: MaxEntHyperparams = MaxEntHyperparams()) -> MaxEntModel:
    token_lists, labels, _ = expand_instances(documents, task)
    vocab = build_vocabulary(token_lists, min_df=min_df)
    if vocab.size == 0:
        raise InsufficientDataError(f"no token reaches document frequency {min_df}")
    X = vectorize_corpus(token_lists, vocab)
    return train_maxent(X, labels, TASK_LABELS[task], vocab, hyperparams)


def evaluate_documents(model: MaxEntModel, documents: Sequence[TokenizedDocument], task: str) -> EvalReport:
    token_lists, gold, _ = expand_instances(documents, task)
    X = vectorize_corpus(token_lists, model.vocabulary)
    predictions = [predict_vector(model, X[i]).label for i in range(X.shape[0])]
    return evaluate(predictions, gold, model.classes)


def save_model(model: MaxEntModel, path: str):
    payload = {
        "format_version": MODEL_FORMAT_VERSION,
        "classes": list(model.classes),
        "vocabulary": model.vocabulary.index,
        "hyperparams": asdict(model.hyperparams),
        "weights": model.weights.tolist(),
        "loss_history": model.loss_history,
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, ensure_ascii=False, sort_keys=True)


def load_model(path: str) -> MaxEntModel:
    with open(path, "r", encoding="utf-8") as f:
        payload = json.load(f)
    if payload.get("format_version") != MODEL_FORMAT_VERSION:
        raise DataValidationError(f"unsupported model format {payload.get('format_version')!r}", path=path)
    return MaxEntModel(
        weights=np.asarray(payload["weights"], dtype=float),
        classes=tuple(payload["classes"]),
        vocabulary=Vocabulary({t: int(i) for t, i in payload["vocabulary"].items()}),
        hyperparams=MaxEntHyperparams(**payload["hyperparams"]),
        loss_history=list(payload["loss_history"]),
    )
