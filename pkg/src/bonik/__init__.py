"""Permissioned-ledger banking sandbox: chaincode, chat gateway, NLU,
and a discrete-event throughput benchmark."""

__version__ = "0.1.0"
