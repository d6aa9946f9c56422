"""Independent JA3 computation used as the fingerprint oracle.

Standard JA3: md5 over "version,ciphers,extensions,groups,pointformats" where
version is the ClientHello legacy version as decimal, the list fields are
dash-joined decimals in wire order, and GREASE values (0x0a0a, 0x1a1a, ...
0xfafa) are omitted from ciphers, extensions, and groups.

Kept free of any imports from the package under test on purpose; all offsets
are walked by hand.
"""

import hashlib

GREASE = {0x0A0A + 0x1010 * i for i in range(16)}


def ja3_string(record: bytes) -> str:
    assert record[0] == 0x16, "not a handshake record"
    assert record[5] == 0x01, "not a ClientHello"
    i = 9  # skip record header (5), handshake type (1), handshake length (3)
    version = int.from_bytes(record[i:i + 2], "big")
    i += 2
    i += 32  # random
    sid_len = record[i]
    i += 1 + sid_len
    cs_len = int.from_bytes(record[i:i + 2], "big")
    i += 2
    ciphers = [int.from_bytes(record[i + j:i + j + 2], "big") for j in range(0, cs_len, 2)]
    i += cs_len
    comp_len = record[i]
    i += 1 + comp_len

    extensions = []
    groups = []
    points = []
    if i < 5 + int.from_bytes(record[3:5], "big"):
        ext_total = int.from_bytes(record[i:i + 2], "big")
        i += 2
        end = i + ext_total
        while i < end:
            etype = int.from_bytes(record[i:i + 2], "big")
            elen = int.from_bytes(record[i + 2:i + 4], "big")
            data = record[i + 4:i + 4 + elen]
            extensions.append(etype)
            if etype == 10:
                glen = int.from_bytes(data[0:2], "big")
                for j in range(2, 2 + glen, 2):
                    groups.append(int.from_bytes(data[j:j + 2], "big"))
            elif etype == 11:
                plen = data[0]
                points.extend(data[1:1 + plen])
            i += 4 + elen

    fields = [
        str(version),
        "-".join(str(c) for c in ciphers if c not in GREASE),
        "-".join(str(e) for e in extensions if e not in GREASE),
        "-".join(str(g) for g in groups if g not in GREASE),
        "-".join(str(p) for p in points),
    ]
    return ",".join(fields)


def ja3_digest(record: bytes) -> str:
    return hashlib.md5(ja3_string(record).encode()).hexdigest()
