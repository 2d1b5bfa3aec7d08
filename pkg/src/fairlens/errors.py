"""Exception types shared across the package.

Every error carries a stable ``code`` (the class name) that the CLI and the
HTTP API surface verbatim, plus a ``details`` dict with the structured fields
named in each operation's contract.
"""

from __future__ import annotations


class FairlensError(Exception):
    """Base class for all operational errors."""

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details

    @property
    def code(self) -> str:
        return type(self).__name__

    def as_dict(self) -> dict:
        return {"code": self.code, "message": str(self), "details": self.details}


# -- ingest ------------------------------------------------------------------

class MalformedRecord(FairlensError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"malformed record at line {line}: {reason}", line=line, reason=reason)
        self.line = line


class DuplicateInstanceId(FairlensError):
    def __init__(self, instance_id: str):
        super().__init__(f"duplicate instance_id {instance_id!r}", instance_id=instance_id)
        self.instance_id = instance_id


class DanglingImageRef(FairlensError):
    def __init__(self, image_id: str):
        super().__init__(f"instance references unknown image {image_id!r}", image_id=image_id)
        self.image_id = image_id


class ConfidenceOutOfRange(FairlensError):
    def __init__(self, line: int, value: float):
        super().__init__(f"confidence {value} out of [0,1] at line {line}", line=line, value=value)
        self.line = line


class WrongDimension(FairlensError):
    def __init__(self, instance_id: str, n: int):
        super().__init__(f"embedding {instance_id!r} has {n} values, expected 128",
                         instance_id=instance_id, n=n)


class ZeroVector(FairlensError):
    def __init__(self, instance_id: str):
        super().__init__(f"embedding {instance_id!r} is the zero vector", instance_id=instance_id)


class EmptySeed(FairlensError):
    def __init__(self):
        super().__init__("stub embedder seed must be non-empty")


class InvalidBox(FairlensError):
    def __init__(self, reason: str):
        super().__init__(f"invalid bounding box: {reason}", reason=reason)


# -- fairness ----------------------------------------------------------------

class ThresholdOutOfRange(FairlensError):
    def __init__(self, tau: float):
        super().__init__(f"matching threshold {tau} not in (0, 1]", tau=tau)


class UnknownImage(FairlensError):
    def __init__(self, image_id: str):
        super().__init__(f"unknown image {image_id!r}", image_id=image_id)
        self.image_id = image_id


class MissingGroup(FairlensError):
    def __init__(self, image_id: str, grouping: str):
        super().__init__(f"image {image_id!r} lacks a {grouping} label", image_id=image_id,
                         grouping=grouping)


class GroupingMismatch(FairlensError):
    def __init__(self, before: str, after: str):
        super().__init__(f"cannot compare reports grouped by {before!r} and {after!r}",
                         before=before, after=after)


# -- analytics ---------------------------------------------------------------

class TooFewPoints(FairlensError):
    def __init__(self, n: int, needed: int):
        super().__init__(f"need at least {needed} points, got {n}", n=n, needed=needed)


class BadParameter(FairlensError):
    def __init__(self, reason: str):
        super().__init__(reason, reason=reason)


class EmptyGrid(FairlensError):
    def __init__(self):
        super().__init__("eps grid is empty")


class NoValidClustering(FairlensError):
    def __init__(self):
        super().__init__("no eps in the grid produced at least two clusters")


class NeedTwoClusters(FairlensError):
    def __init__(self, found: int):
        super().__init__(f"metric needs at least 2 clusters, found {found}", found=found)


class CoincidentCentroids(FairlensError):
    def __init__(self, a: int, b: int):
        super().__init__(f"clusters {a} and {b} have coincident centroids", a=a, b=b)


class PerplexityOutOfRange(FairlensError):
    def __init__(self, perplexity: float, n: int):
        super().__init__(f"perplexity {perplexity} not in [5, (n-1)/3] for n={n}",
                         perplexity=perplexity, n=n)


class TooManyPoints(FairlensError):
    def __init__(self, n: int, limit: int):
        super().__init__(f"{n} points exceeds the exact-method limit of {limit}", n=n, limit=limit)


# -- anonymizer --------------------------------------------------------------

class BadSigma(FairlensError):
    def __init__(self, sigma: float):
        super().__init__(f"sigma must be > 0, got {sigma}", sigma=sigma)


class BadRadius(FairlensError):
    def __init__(self, radius: int):
        super().__init__(f"kernel radius must be >= 1, got {radius}", radius=radius)


class EmptyIntersection(FairlensError):
    def __init__(self):
        super().__init__("box does not intersect the image")


class IoFailure(FairlensError):
    def __init__(self, path: str, reason: str):
        super().__init__(f"i/o failure on {path}: {reason}", path=path, reason=reason)


# -- portal ------------------------------------------------------------------

class DuplicateOpenTask(FairlensError):
    def __init__(self, image_id: str):
        super().__init__(f"image {image_id!r} already has an open task", image_id=image_id)


class TaskClosed(FairlensError):
    def __init__(self, task_id: str):
        super().__init__(f"task {task_id!r} is closed", task_id=task_id)


class UnknownTask(FairlensError):
    def __init__(self, task_id: str):
        super().__init__(f"unknown task {task_id!r}", task_id=task_id)


class UnknownSubmission(FairlensError):
    def __init__(self, submission_id: str):
        super().__init__(f"unknown submission {submission_id!r}", submission_id=submission_id)


class UnknownDetectionIndex(FairlensError):
    def __init__(self, index: int, count: int):
        super().__init__(f"detection index {index} out of range for {count} detections",
                         index=index, count=count)


class Unauthorized(FairlensError):
    def __init__(self, user_id: str, needed_role: str):
        super().__init__(f"user {user_id!r} lacks the {needed_role!r} role",
                         user_id=user_id, needed_role=needed_role)


class SelfVerification(FairlensError):
    def __init__(self, user_id: str):
        super().__init__(f"user {user_id!r} cannot verify their own submission", user_id=user_id)


class DuplicateVerdict(FairlensError):
    def __init__(self, user_id: str):
        super().__init__(f"user {user_id!r} already voted on this submission", user_id=user_id)


class AlreadyTerminal(FairlensError):
    def __init__(self, submission_id: str, state: str):
        super().__init__(f"submission {submission_id!r} is already {state}",
                         submission_id=submission_id, state=state)


class AlreadyAwarded(FairlensError):
    def __init__(self, submission_id: str):
        super().__init__(f"submission {submission_id!r} was already awarded",
                         submission_id=submission_id)


class NotVerified(FairlensError):
    def __init__(self, submission_id: str, state: str):
        super().__init__(f"submission {submission_id!r} is {state}, not verified",
                         submission_id=submission_id, state=state)


class NoContributors(FairlensError):
    def __init__(self, dataset_id: str):
        super().__init__(f"dataset {dataset_id!r} has no contributors with positive weight",
                         dataset_id=dataset_id)


class BadAmount(FairlensError):
    def __init__(self, amount):
        super().__init__(f"amount must be a positive integer, got {amount!r}", amount=amount)


class UnknownUser(FairlensError):
    def __init__(self, user_id: str):
        super().__init__(f"unknown user {user_id!r}", user_id=user_id)


class UnknownDataset(FairlensError):
    def __init__(self, dataset_id: str):
        super().__init__(f"unknown dataset {dataset_id!r}", dataset_id=dataset_id)
