class CodecError(Exception):
    """Codec failure carrying a short machine-greppable reason code.

    `code` is a stable kebab-case identifier (e.g. "bad-magic",
    "dimension-mismatch"); `detail` is free-form context for humans.
    """

    def __init__(self, code: str, detail: str = ""):
        self.code = code
        self.detail = detail
        super().__init__(f"{code}: {detail}" if detail else code)
