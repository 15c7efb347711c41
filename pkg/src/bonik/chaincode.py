"""System and bank chaincodes executed against the world state.

The system chaincode handles registration and login; the bank chaincode
handles balance queries and transfers. Both are pure functions of
(request, world state): all their effects go through the state accessor
they are handed, which is how the ledger replays them deterministically.

World-state key namespaces (shared state space, collisions impossible):
    user:<userName>  -> password digest (64 hex chars)
    acct:<userName>  -> 10-digit account number
    bal:<accountNum> -> balance as a decimal-string integer
    meta:next_account -> allocation counter for account numbers
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Protocol, Union

REQUEST_TYPES = ("registration", "login", "balQuery", "transfer")

STATUS_TRUE = "TRUE"
STATUS_FALSE = "FALSE"
STATUS_SUCCESS = "TRANSACTION SUCCESSFUL"
STATUS_ABORTED = "TRANSACTION ABORTED"
ERR_DUPLICATE_USER = "ERROR_DUPLICATE_USER"
ERR_ACCOUNT_NOT_FOUND = "ERROR_ACCOUNT_NOT_FOUND"
ERR_BAD_REQUEST = "ERROR_BAD_REQUEST"
ERR_UNSUPPORTED_TYPE = "ERROR_UNSUPPORTED_TYPE"

USER_PREFIX = "user:"
ACCT_PREFIX = "acct:"
BAL_PREFIX = "bal:"
NEXT_ACCOUNT_KEY = "meta:next_account"

INITIAL_BALANCE = 10_000
FIRST_ACCOUNT_NUMBER = 1_000_000_001

_ACCOUNT_RE = re.compile(r"^[0-9]{10}$")
_DIGEST_RE = re.compile(r"^[0-9a-f]{64}$")
_BALANCE_RE = re.compile(r"BALANCE\((\d+)\)")


class RequestError(ValueError):
    """Raised when a wire request cannot be parsed into a valid Request."""


class StateAccessor(Protocol):
    """What a chaincode sees of the ledger: committed key-value state."""

    def get_state(self, key: str) -> Optional[str]: ...

    def put_state(self, key: str, value: str) -> None: ...


@dataclass(frozen=True)
class RegisData:
    userName: str
    h: str


@dataclass(frozen=True)
class LoginData:
    userName: str
    h: str


@dataclass(frozen=True)
class BalData:
    userName: str
    accountNum: str


@dataclass(frozen=True)
class TransferData:
    userName: str
    fromAcc: str
    toAcc: str
    amount: int


RequestData = Union[RegisData, LoginData, BalData, TransferData]

_DATA_CLASS = {
    "registration": RegisData,
    "login": LoginData,
    "balQuery": BalData,
    "transfer": TransferData,
}


@dataclass(frozen=True)
class Request:
    """Tagged union carried through every layer: ``type`` selects the
    variant of ``data``."""

    type: str
    data: RequestData

    def __post_init__(self):
        expected = _DATA_CLASS.get(self.type)
        if expected is None:
            raise RequestError(f"unknown request type {self.type!r}")
        if not isinstance(self.data, expected):
            raise RequestError(
                f"type {self.type!r} requires {expected.__name__}, got {type(self.data).__name__}"
            )
        _validate_data(self.data)

    def to_dict(self) -> dict:
        return {"type": self.type, "data": self.data.__dict__.copy()}

    @classmethod
    def from_dict(cls, obj: dict) -> "Request":
        if not isinstance(obj, dict):
            raise RequestError("request must be an object")
        rtype = obj.get("type")
        data = obj.get("data")
        cls_for_type = _DATA_CLASS.get(rtype)
        if cls_for_type is None:
            raise RequestError(f"unknown request type {rtype!r}")
        if not isinstance(data, dict):
            raise RequestError("request data must be an object")
        fields = {f: data.get(f) for f in cls_for_type.__dataclass_fields__}
        missing = [f for f, v in fields.items() if v is None]
        if missing:
            raise RequestError(f"missing fields for {rtype}: {', '.join(missing)}")
        return cls(type=rtype, data=cls_for_type(**fields))


def _validate_data(data: RequestData) -> None:
    if isinstance(data, (RegisData, LoginData)):
        if not isinstance(data.userName, str) or not data.userName.strip():
            raise RequestError("userName must be a non-empty string")
        if not isinstance(data.h, str) or not _DIGEST_RE.match(data.h):
            raise RequestError("h must be a 64-hex-char SHA-256 digest")
    elif isinstance(data, BalData):
        if not isinstance(data.userName, str) or not data.userName.strip():
            raise RequestError("userName must be a non-empty string")
        if not isinstance(data.accountNum, str) or not _ACCOUNT_RE.match(data.accountNum):
            raise RequestError("accountNum must be 10 decimal digits")
    elif isinstance(data, TransferData):
        if not isinstance(data.userName, str) or not data.userName.strip():
            raise RequestError("userName must be a non-empty string")
        for field in ("fromAcc", "toAcc"):
            value = getattr(data, field)
            if not isinstance(value, str) or not _ACCOUNT_RE.match(value):
                raise RequestError(f"{field} must be 10 decimal digits")
        if data.fromAcc == data.toAcc:
            raise RequestError("fromAcc and toAcc must differ")
        if not isinstance(data.amount, int) or isinstance(data.amount, bool) or data.amount < 1:
            raise RequestError("amount must be a positive integer")


@dataclass(frozen=True)
class Response:
    status: str
    detail: Optional[str] = None

    @property
    def ok(self) -> bool:
        return not self.status.startswith("ERROR_") and self.status != STATUS_FALSE

    @property
    def balance_value(self) -> Optional[int]:
        """Parses BALANCE(n) statuses; None for anything else."""
        m = _BALANCE_RE.fullmatch(self.status)
        return int(m.group(1)) if m else None

    def to_dict(self) -> dict:
        return {"status": self.status, "detail": self.detail}


def balance_status(value: int) -> str:
    return f"BALANCE({value})"


def scc_invoke(state: StateAccessor, request: Request) -> Response:
    """System chaincode entry point: dispatches login and registration,
    forwards everything else to the bank chaincode."""
    if request.type == "login":
        return login_func(state, request.data)
    if request.type == "registration":
        return reg_func(state, request.data)
    return bcc_invoke(state, request)


def reg_func(state: StateAccessor, data: RegisData) -> Response:
    """Stores the credential digest and provisions the user's account.

    Duplicate userNames are rejected rather than overwritten: silently
    replacing a stored digest would let anyone capture an existing account.
    """
    user_key = USER_PREFIX + data.userName
    if state.get_state(user_key) is not None:
        return Response(ERR_DUPLICATE_USER, f"user {data.userName!r} already registered")
    state.put_state(user_key, data.h)
    account_num = _allocate_account(state)
    state.put_state(ACCT_PREFIX + data.userName, account_num)
    state.put_state(BAL_PREFIX + account_num, str(INITIAL_BALANCE))
    return Response(STATUS_TRUE, account_num)


def _allocate_account(state: StateAccessor) -> str:
    raw = state.get_state(NEXT_ACCOUNT_KEY)
    next_num = int(raw) if raw is not None else FIRST_ACCOUNT_NUMBER
    state.put_state(NEXT_ACCOUNT_KEY, str(next_num + 1))
    return f"{next_num:010d}"


def login_func(state: StateAccessor, data: LoginData) -> Response:
    """TRUE iff the stored digest matches the submitted one. Read-only."""
    stored = state.get_state(USER_PREFIX + data.userName)
    if stored is not None and stored == data.h:
        return Response(STATUS_TRUE)
    return Response(STATUS_FALSE)


def bcc_invoke(state: StateAccessor, request: Request) -> Response:
    """Bank chaincode entry point: balance queries and transfers only."""
    if request.type == "balQuery":
        return bal_q_func(state, request.data)
    if request.type == "transfer":
        return trans_func(state, request.data)
    return Response(ERR_UNSUPPORTED_TYPE, f"bank chaincode cannot handle {request.type!r}")


def bal_q_func(state: StateAccessor, data: BalData) -> Response:
    balance = state.get_state(BAL_PREFIX + data.accountNum)
    if balance is None:
        return Response(ERR_ACCOUNT_NOT_FOUND, f"no account {data.accountNum}")
    return Response(balance_status(int(balance)))


def trans_func(state: StateAccessor, data: TransferData) -> Response:
    """Debit fromAcc, credit toAcc, strictly-greater balance check.

    The check is ``fromBalance > amount``: transferring the exact full
    balance aborts. Aborts leave both balances untouched.
    """
    from_raw = state.get_state(BAL_PREFIX + data.fromAcc)
    to_raw = state.get_state(BAL_PREFIX + data.toAcc)
    if from_raw is None:
        return Response(ERR_ACCOUNT_NOT_FOUND, f"no account {data.fromAcc}")
    if to_raw is None:
        return Response(ERR_ACCOUNT_NOT_FOUND, f"no account {data.toAcc}")
    from_balance, to_balance = int(from_raw), int(to_raw)
    if from_balance > data.amount:
        from_balance -= data.amount
        to_balance += data.amount
        state.put_state(BAL_PREFIX + data.fromAcc, str(from_balance))
        state.put_state(BAL_PREFIX + data.toAcc, str(to_balance))
        return Response(STATUS_SUCCESS)
    return Response(STATUS_ABORTED)


def invoke_from_wire(state: StateAccessor, wire_request: dict) -> Response:
    """Parse-and-dispatch used by the commit path: malformed requests come
    back as error responses with no state change."""
    try:
        request = Request.from_dict(wire_request)
    except RequestError as exc:
        return Response(ERR_BAD_REQUEST, str(exc))
    return scc_invoke(state, request)
