#!/usr/bin/env python3
"""Regenerates the synthetic fixtures and golden files in this directory.

Run from the crate root: python3 fixtures/generate.py

Everything is seeded, so the output is stable. The golden files computed
here (dehydrated digest, gold-label timeline CSV, prompt render) are
produced by code that is independent of the Rust implementation.
"""

import csv
import datetime as dt
import hashlib
import io
import json
import random
import re
from collections import Counter
from pathlib import Path

HERE = Path(__file__).resolve().parent
CRATE = HERE.parent
rng = random.Random(20221120)

OL = ["#OneLove", "OneLove", "One-Love", "One Love", "one love", "ONE LOVE", "#onelove", "one-love"]
TEAMS = ["Deutschland", "England", "Dänemark", "die Niederlande", "Belgien", "die Schweiz", "Wales", "der DFB"]
TAGS = ["#WM2022", "#FIFAWorldCup", "#WM2022 #GER", "#FIFAWorldCup #Katar2022", "#WM2022 #BoycottQatar2022"]
CLOSERS = ["", "Unglaublich.", "Mal sehen, wie es weitergeht.", "Traurig.", "Krass.",
           "Was für ein Tag.", "Bin gespannt.", "Typisch.", "Heute Abend mehr dazu."]

TEMPLATES = {
    "SUPPORTIVE": [
        ("ONELOVE", "Schade, dass die FIFA die {ol} Binde verbietet. {closer} {tag}"),
        ("ONELOVE", "Ich hätte mir gewünscht, dass {team} die {ol} Binde trotzdem bei der WM trägt. {closer}"),
        ("HUMAN_RIGHTS", "Die {ol} Binde steht für Vielfalt und Respekt, die FIFA sollte sich schämen. {tag}"),
        ("HUMAN_RIGHTS", "Menschenrechte sind nicht verhandelbar. {ol} gehört zur WM! {closer}"),
        ("BOYCOTT", "#WMderSchande: die FIFA verbietet die {ol} Binde und {team} knickt ein. {tag}"),
        ("HUMAN_RIGHTS", "Frauenrechte, Homosexualität, Arbeiter: die {ol} Binde wäre das Mindeste gewesen. #WM2022 {closer}"),
        ("BOYCOTT", "Ich boykottiere diese WM. Ohne {ol} Binde kein Fernsehen bei mir. {tag}"),
        ("ONELOVE", "Respekt an {team} für die Geste gegen das {ol} Verbot der FIFA. {closer}"),
    ],
    "AGAINST": [
        ("POLITICS", "Diese {ol} Binde ist reine Symbolpolitik, lasst den Fußball in Katar in Ruhe. {closer}"),
        ("POLITICS", "Wer braucht schon eine {ol} Binde bei der WM? Peinliche Moral-Show. {tag}"),
        ("ONELOVE", "Die {ol} Aktion nervt nur noch, respektiert die Kultur des Gastgebers. #WM2022 {closer}"),
        ("POLITICS", "Gut, dass die FIFA die {ol} Binde verbietet. Sport ist Sport. {closer}"),
    ],
    "NEUTRAL": [
        ("ONELOVE", "Die FIFA droht mit Gelber Karte für die {ol} Binde. {tag}"),
        ("NEWS", "{team} verzichtet bei der WM auf die {ol} Binde. {closer}"),
        ("GAME", "Vor dem Anpfiff halten sich die Spieler den Mund zu, {ol} bleibt Thema. #WM2022 {closer}"),
        ("POLITICS", "Debatte über Politik im Sport: Was bedeutet die {ol} Binde für die FIFA? {closer}"),
        ("NEWS", "Laut Bericht will {team} über die {ol} Binde bei der WM neu beraten. {tag}"),
        ("GAME", "Anstoß in Doha, die {ol} Diskussion läuft weiter. {tag}"),
        ("ONELOVE", "Sanktionen wegen {ol}: die FIFA erklärt die Regeln zur Kapitänsbinde. {closer}"),
    ],
}

# Per-day weights produce a spike right after the sanction announcement.
START = dt.date(2022, 11, 20)
END = dt.date(2022, 12, 18)
DAYS = [START + dt.timedelta(days=i) for i in range((END - START).days + 1)]
WEIGHTS = {dt.date(2022, 11, 20): 6, dt.date(2022, 11, 21): 16, dt.date(2022, 11, 22): 12,
           dt.date(2022, 11, 23): 9, dt.date(2022, 11, 24): 6}


def iso(ts):
    return ts.strftime("%Y-%m-%dT%H:%M:%SZ")


def norm(text):
    return re.sub(r"\s+", " ", text).strip()


def query_filter_lexical(text):
    toks = [t for t in re.split(r"[^\w#@]+|_", text.lower()) if t]
    plain = {t.lstrip("#") for t in toks}
    hashes = {t for t in toks if t.startswith("#")}
    if "liveticker" in plain or "newsticker" in plain:
        return False
    if "#wm2022" in hashes or "#fifaworldcup" in hashes or "fifa" in plain or "wm" in plain:
        return True
    return False


def mentions_onelove(text):
    t = text.lower()
    return any(v in t for v in ("onelove", "one-love", "one love"))


def make_posts():
    stance_quota = {"SUPPORTIVE": 95, "AGAINST": 30, "NEUTRAL": 75}
    plan = [s for s, n in stance_quota.items() for _ in range(n)]
    rng.shuffle(plan)
    seen = set()
    posts = []
    for stance in plan:
        while True:
            topic, tpl = rng.choice(TEMPLATES[stance])
            text = norm(tpl.format(ol=rng.choice(OL), team=rng.choice(TEAMS),
                                   tag=rng.choice(TAGS), closer=rng.choice(CLOSERS)))
            if text not in seen and query_filter_lexical(text) and mentions_onelove(text):
                seen.add(text)
                break
        posts.append({"text": text, "stance": stance, "topic": topic})
    days = rng.choices(DAYS, weights=[WEIGHTS.get(d, 2) for d in DAYS], k=len(posts))
    stamps = []
    for d in days:
        secs = rng.randrange(24 * 3600)
        stamps.append(dt.datetime(d.year, d.month, d.day) + dt.timedelta(seconds=secs))
    # Guarantee both ends of the span are covered.
    stamps[0] = dt.datetime(2022, 11, 20, 9, 15, 0)
    stamps[1] = dt.datetime(2022, 12, 18, 21, 40, 5)
    stamps.sort()
    for i, (post, ts) in enumerate(zip(posts, stamps)):
        post["id"] = str(1594000000000000000 + i * 7919 + 17)
        post["created_at"] = iso(ts)
    return posts


def row(post, lang="de", rt=False, rp=False, qt=False):
    return {"id": post["id"], "created_at": post["created_at"], "lang": lang, "text": post["text"],
            "is_retweet": rt, "is_reply": rp, "is_quote": qt}


def dump_jsonl(rows, path):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for r in rows:
            f.write(json.dumps(r, ensure_ascii=False, separators=(",", ":")) + "\n")


def noise_rows(posts):
    base = 1593000000000000000
    specs = [
        # (text, lang, rt, rp, qt, timestamp)
        ("RT Die FIFA verbietet die #OneLove Binde. #WM2022", "de", True, False, False, "2022-11-21T12:00:00Z"),
        ("FIFA WM", "de", True, False, False, "2022-11-22T08:00:00Z"),
        ("Genau so! #WM2022 #OneLove", "de", False, True, False, "2022-11-21T13:01:00Z"),
        ("Stimmt, die FIFA übertreibt mit der One Love Strafe.", "de", False, True, False, "2022-11-23T10:00:00Z"),
        ("Siehe unten: #FIFAWorldCup one-love", "de", False, False, True, "2022-11-22T17:30:00Z"),
        ("FIFA bans the OneLove armband #WM2022", "en", False, False, False, "2022-11-21T14:00:00Z"),
        ("FIFA WM", "en", False, False, False, "2022-11-28T09:00:00Z"),
        ("Liveticker: FIFA WM heute mit One Love Debatte", "de", False, False, False, "2022-11-24T19:00:00Z"),
        ("Newsticker zur #FIFAWorldCup und OneLove", "de", False, False, False, "2022-11-25T11:11:11Z"),
        ("Fußball macht einfach Spaß, auch ohne OneLove.", "de", False, False, False, "2022-11-26T15:00:00Z"),
        ("Nur Katar heute, one love.", "de", False, False, False, "2022-11-27T16:00:00Z"),
        ("WM2022 ohne Hashtag und ohne Binde", "de", False, False, False, "2022-11-29T20:00:00Z"),
        ("Vorfreude auf die #WM2022 und die #OneLove Binde", "de", False, False, False, "2022-11-19T22:00:00Z"),
        ("Nachlese zur WM und zur One Love Binde", "de", False, False, False, "2022-12-19T08:00:00Z"),
        ("Fußballabend mit Freunden", "de", False, False, False, "2022-12-01T18:00:00Z"),
        ("Qatar airways is great", "en", False, False, False, "2022-12-02T07:00:00Z"),
    ]
    rows = []
    for i, (text, lang, rt, rp, qt, ts) in enumerate(specs):
        rows.append({"id": str(base + i), "created_at": ts, "lang": lang, "text": text,
                     "is_retweet": rt, "is_reply": rp, "is_quote": qt})
    return rows


def kappa(a, b):
    n = len(a)
    po = sum(x == y for x, y in zip(a, b)) / n
    ca, cb = Counter(a), Counter(b)
    pe = sum(ca[k] / n * cb[k] / n for k in set(a) | set(b))
    return (po - pe) / (1 - pe)


def main():
    posts = make_posts()
    mini = [row(p) for p in posts]
    dump_jsonl(mini, HERE / "minicorpus.jsonl")

    raw = mini + noise_rows(posts)
    raw.sort(key=lambda r: (r["created_at"], r["id"]))
    dump_jsonl(raw, HERE / "raw_archive.jsonl")

    # Stance gold: 148 sampled posts with the reported 63 / 15 / 70 split.
    pools = {s: [p for p in posts if p["stance"] == s] for s in ("SUPPORTIVE", "AGAINST", "NEUTRAL")}
    wanted = {"SUPPORTIVE": 63, "AGAINST": 15, "NEUTRAL": 70}
    gold = []
    for s, n in wanted.items():
        gold += rng.sample(pools[s], n)
    rng.shuffle(gold)
    with open(HERE / "stance_gold.csv", "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["post_id", "annotator_id", "label"])
        for p in gold:
            w.writerow([p["id"], "ann1", p["stance"]])

    # Two-annotator agreement set over the first 100 gold items. A second
    # annotator disagrees on a searched subset so that kappa lands near 0.68.
    first = [p["stance"] for p in gold[:100]]
    labels = ["SUPPORTIVE", "AGAINST", "NEUTRAL"]
    search = random.Random(68)
    best = None
    for _ in range(20000):
        second = list(first)
        k = search.randrange(10, 30)
        for i in search.sample(range(100), k):
            second[i] = search.choice([l for l in labels if l != first[i]])
        kap = kappa(first, second)
        if abs(kap - 0.68) < 0.001:
            best = (second, kap)
            break
    second, kap = best
    with open(HERE / "iaa_100.csv", "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["post_id", "annotator_id", "label"])
        for p, lab in zip(gold[:100], first):
            w.writerow([p["id"], "ann1", lab])
        for p, lab in zip(gold[:100], second):
            w.writerow([p["id"], "ann2", lab])
    print(f"iaa kappa = {kap:.6f}")

    # Manual topic labels for 60 posts.
    with open(HERE / "topic_gold.csv", "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["post_id", "annotator_id", "label"])
        for p in posts[::2][:60]:
            w.writerow([p["id"], "ann1", p["topic"]])

    # Golden: dehydrated export digest.
    ids = "".join(p["id"] + "\n" for p in posts).encode("utf-8")
    (HERE / "golden" / "minicorpus.ids.sha256").write_text(hashlib.sha256(ids).hexdigest() + "\n")

    # Golden: per-day stance counts of the gold annotations, long format.
    by_id = {p["id"]: p for p in posts}
    counts = Counter()
    for p in gold:
        counts[(by_id[p["id"]]["created_at"][:10], p["stance"])] += 1
    out = io.StringIO()
    out.write("date,series,count,proportion\n")
    for d in DAYS:
        ds = d.isoformat()
        total = sum(counts[(ds, s)] for s in labels)
        for s in sorted(labels):
            c = counts[(ds, s)]
            prop = c / total if total else 0.0
            out.write(f"{ds},{s},{c},{prop:.6f}\n")
    (HERE / "golden" / "gold_stance_timeline.csv").write_text(out.getvalue())

    # Golden: full decision-stage render of the default template on a dummy post.
    tpl = (CRATE / "prompts" / "onelove_mistral.txt").read_text(encoding="utf-8")
    head = tpl[: tpl.index("{decision}")]
    render = (head.replace("{tweet}", "dummy tweet about the one love binde")
                  .replace("{translation}", "dummy translation")
                  .replace("{reason}", "dummy reasoning"))
    (HERE / "golden" / "decision_full.txt").write_text(render, encoding="utf-8")

    print(f"minicorpus: {len(mini)} rows, raw archive: {len(raw)} rows")
    print("stance intent:", Counter(p["stance"] for p in posts))


if __name__ == "__main__":
    main()
