"""Regenerates the bundled synthetic fixture (deterministic)."""

import json
import random
from pathlib import Path

HERE = Path(__file__).parent
rng = random.Random(20240611)

DEMOS = {
    "catholic": {
        "seeds": ["Catholicism", "CatholicDating"],
        "marker": "rosary",
        "self": "I am Catholic",
        "anti": "I'm not Catholic",
        "talk": ["Mass on Sunday was lovely", "our parish choir sang", "praying the novena this week"],
    },
    "jewish": {
        "seeds": ["Judaism", "Jewish"],
        "marker": "shabbat",
        "self": "I'm Jewish",
        "anti": "I am not Jewish",
        "talk": ["lighting candles before dinner", "our synagogue hosted a seder", "studying Torah with friends"],
    },
    "teacher": {
        "seeds": ["Teachers", "teaching"],
        "marker": "classroom",
        "self": "I am a teacher",
        "anti": "I am a student",
        "talk": ["grading essays all weekend", "parent conferences are next week", "my lesson plan finally worked"],
    },
}

GARDEN = ["tomato plants", "compost bin", "raised bed soil", "pepper seeds", "mulch around the roses", "weeds in the garden"]
FINANCE = ["monthly budget", "retirement savings", "index fund", "credit card debt", "mortgage payment", "emergency savings"]
CHATTER = ["what is your favorite movie", "best pizza topping", "weirdest dream you had", "a song stuck in my head"]

posts = []
clock = [1_600_000_000]


def add(author, sub, text):
    clock[0] += 60
    posts.append({"post_id": f"p{len(posts):04d}", "author_id": author, "subreddit_id": sub,
                  "created_at": clock[0], "text": text})


for demo, d in DEMOS.items():
    for i in range(12):
        user = f"{demo}_{i:02d}"
        for _ in range(1 + i % 6):
            add(user, d["seeds"][0], rng.choice(d["talk"]) + ".")
        for _ in range(i % 3):
            add(user, d["seeds"][1], rng.choice(d["talk"]) + ", anyone else?")
        for _ in range(3):
            add(user, "gardening", f"Working on my {rng.choice(GARDEN)} after {d['marker']} time, the garden plants look great.")
        for _ in range(3):
            add(user, "personalfinance", f"Setting a {rng.choice(FINANCE)} goal, {d['marker']} reminded me to budget and save.")
        if i >= 8:
            add(user, "AskReddit", f"{d['self']} and {rng.choice(CHATTER)}?")
        elif i == 0:
            add(user, "AskReddit", f"{d['anti']}, but {rng.choice(CHATTER)}.")
        else:
            add(user, "AskReddit", rng.choice(CHATTER).capitalize() + "?")

# Unaffiliated users, a few of whom wander into seed subreddits.
for i in range(10):
    user = f"other_{i:02d}"
    add(user, "AskReddit", rng.choice(CHATTER).capitalize() + "?")
    add(user, "gardening", f"My {rng.choice(GARDEN)} needs help, any seeds advice?")
    add(user, "personalfinance", f"How do I start a {rng.choice(FINANCE)}?")
    add(user, "Cooking", "Tried a new soup recipe tonight.")
    if i % 3 == 0:
        demo = list(DEMOS)[i % len(DEMOS)]
        add(user, DEMOS[demo]["seeds"][0], "Just curious about this community.")

for _ in range(15):
    add("AutoModerator", "AskReddit", "Your post has been removed. Please read the rules.")
for _ in range(20):
    add("spam_account", rng.choice(["AskReddit", "Cooking", "gardening"]), "Check out my channel for daily deals!")

target = 500
while len(posts) < target - 2:
    add(f"lurker_{len(posts) % 7}", "Cooking", "Anyone have a good bread recipe?")
add("lurker_x", "tinysub", "First post here.")
add("lurker_y", "tinysub", "Second post here.")
assert len(posts) == target, len(posts)

lines = [json.dumps(p) for p in posts]
# Malformed and duplicate records the ingest step must reject.
lines.insert(10, '{"post_id": "bad1", "author_id": "x"')
lines.insert(20, json.dumps({"post_id": "bad2", "author_id": "", "subreddit_id": "AskReddit",
                             "created_at": 1, "text": "missing author"}))
lines.insert(30, json.dumps({"post_id": "bad3", "author_id": "y", "subreddit_id": "AskReddit",
                             "created_at": 1, "text": "   "}))
lines.insert(40, json.dumps(posts[5]))
(HERE / "posts.jsonl").write_text("\n".join(lines) + "\n")

(HERE / "bots.txt").write_text("AutoModerator\n")

for demo, d in DEMOS.items():
    seed = {"demographic": demo, "subreddits": d["seeds"], "created_at": 0, "log_hash": ""}
    (HERE / "seed_sets" / f"{demo}.json").write_text(json.dumps(seed, indent=2) + "\n")
    others = [o["self"] for k, o in DEMOS.items() if k != demo]
    phrases = {"demographic": demo, "self_id": [d["self"]], "anti_self_id": [d["anti"]] + others}
    (HERE / "phrases" / f"{demo}.json").write_text(json.dumps(phrases, indent=2) + "\n")

topics = {"topics": [
    {"category": "Hobbies & Special Interests", "topic": "Gardening",
     "keywords": ["garden", "gardening", "soil", "compost", "tomato", "seeds", "plants", "mulch", "weeds", "raised bed"]},
    {"category": "Finance & Investing", "topic": "Personal Finance",
     "keywords": ["budget", "savings", "save", "retirement", "index fund", "debt", "mortgage", "credit card"]},
]}
(HERE / "topics.json").write_text(json.dumps(topics, indent=2) + "\n")

rows = ["dimension,sheet_id,theory_id,score,meant_for,model_label"]
for model, wins in (("model-a", 3), ("model-b", 1)):
    for dim in ("relevance", "centrality"):
        for s in range(4):
            for t in range(6):
                meant = t < 3
                score = 4 if (t == 0 and s < wins) or (t == 3 and s >= wins) else rng.choice([1, 2, 3])
                rows.append(f"{dim},{model}-{dim}-{s},t{t},{score},{int(meant)},{model}")
    for dim in ("unexpectedness", "specificity"):
        for t in range(6):
            rows.append(f"{dim},{model}-{dim},t{t},{rng.randint(0, 4)},0,{model}")
(HERE / "annotations.csv").write_text("\n".join(rows) + "\n")
