"""
Running experiments from the command line
=========================================

The harness writes CSV tables; the same seed always reproduces the same
bytes. This script drives the same entry point the ``multildp`` command uses.
"""

import tempfile
from pathlib import Path

from multildp.harness import main

with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)

    main(["sample", "--dist", "power-law", "--d", "3", "--n", "1000", "--seed", "1", "--out", str(tmp / "data.csv")])
    print((tmp / "data.csv").read_text().splitlines()[:3])

    args = ["mean-freq", "--epsilon", "0.5,1,2", "--mechanism", "pm,hm,duchi,laplace", "--d", "8",
            "--n", "20000", "--runs", "5", "--dist", "trunc-gaussian:0.5", "--seed", "3"]
    main(args + ["--out", str(tmp / "a.csv")])
    main(args + ["--out", str(tmp / "b.csv")])
    print((tmp / "a.csv").read_text())
    print("identical reruns:", (tmp / "a.csv").read_bytes() == (tmp / "b.csv").read_bytes())

    main(["variance-table", "--mechanism", "pm,hm,duchi", "--epsilon", "1,2,4", "--out", str(tmp / "v.csv")])
    print("\n".join((tmp / "v.csv").read_text().splitlines()[:10]))

    (tmp / "sgd.cfg").write_text("loss=svm\nepsilon=2,4\nn=20000\nd=5\nruns=1\n")
    main(["sgd", "--config", str(tmp / "sgd.cfg"), "--mechanism", "pm,duchi", "--out", str(tmp / "s.csv")])
    print((tmp / "s.csv").read_text())
