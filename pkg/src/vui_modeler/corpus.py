"""Seeded generator for benchmark skills.

Skills are menu trees: a welcome hub, nested option states, one or two
goodbye states, plus extra "side" edges (back to the hub, jumps across the
tree, early exits) until every state has its drawn out-degree.  Question
texts are built from per-type template banks, and every utterance is checked
against ``rule_based_inputs`` so the visible options are exactly the ones a
rule-based reader would extract.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from vui_modeler.model import normalize
from vui_modeler.questions import QuestionType, load_noun_lexicon, rule_based_inputs
from vui_modeler.simulator import Fallback, SchemaError, SkillSpec, SpecState, Transition, load_spec

SKILL_NAMES = (
    "Pet Walker", "Trivia Time", "Daily Helper", "Story Land", "Quiz Master", "Music Box",
    "Fact Finder", "Game Night", "Kitchen Pal", "Sky Watch", "Word Wizard", "Travel Buddy",
    "Garden Guide", "Night Owl", "Brain Gym", "Fun Zone",
)

VOCAB = (
    "news", "weather", "sports", "music", "jokes", "trivia", "recipes", "facts", "quiz",
    "movies", "history", "science", "stories", "games", "tips", "podcasts", "poems",
    "riddles", "horoscope", "traffic", "stocks", "fitness", "yoga", "meditation",
    "sleep sounds", "daily briefing", "fun facts", "animal sounds", "space facts",
    "cooking tips", "travel deals", "book club", "movie times", "bedtime stories", "chess",
    "checkers", "puzzles", "flashcards", "spelling", "math practice", "geography", "art",
    "dance", "cartoons", "dinosaurs", "planets", "oceans", "volcanoes", "birds", "gardening",
    "comedy", "jazz", "classical", "rock", "karaoke", "lullabies", "crosswords", "sudoku",
    "tongue twisters", "fairy tales", "mysteries", "adventures", "workouts", "stretching",
    "breathing", "affirmations", "quotes", "headlines", "scores", "highlights", "lottery",
    "horoscopes", "tides", "sunsets", "moon phases", "constellations", "robots", "inventions",
    "pirates", "castles", "knights", "dragons", "wizards",
)

HIDDEN_COMMANDS = ("main menu", "go back", "start over", "help me", "stop", "cancel", "repeat that")

CONFUSION_LEADS = (
    "Sorry, I didn't get that.",
    "Hmm, I'm not sure what you meant.",
    "Sorry, I didn't understand. Please try again.",
)

ROOT_PREFIXES = ("Welcome to {name}!", "Hi, this is {name}.", "Hello, welcome to {name}.",
                 "Hey there, {name} here.")
PREFIXES = ("You chose {topic}.", "Okay, {topic} it is.", "Welcome to {topic}.",
            "Alright, {topic}.", "Here is the {topic} corner.", "Great, {topic}!")
FINAL_TEXTS = ("Goodbye from {topic}! Thanks for using {name}.",
               "Thanks for visiting {name}, hope you liked {topic}. Bye for now!",
               "See you next time at {name}, enjoy your {topic}!",
               "That is all for {topic} at {name}. Goodbye!")

FRAMES = {
    QuestionType.YES_NO: ("Would you like to hear about {topic}?", "Do you want more {topic}?",
                          "Shall we continue with {topic}?", "Can I tell you more about {topic}?"),
    QuestionType.SELECTION: ("Pick one: {list}.", "Your choices are: {list}.",
                             "Here are the options: {list}.", "Choose from: {list}."),
    QuestionType.INSTRUCTION: ("Say {a} to continue.", "Just say {a} to go on.",
                               "When you are ready, say {a}.", "To keep going, say {a}."),
    QuestionType.WH: ("What is your {noun}?", "What {noun} do you like best?",
                      "What's your favorite {noun}?", "Which {noun} do you prefer?"),
    QuestionType.INSTRUCTION_SELECTION: ("You can say {list}.", "Say {list}.",
                                         "You can ask for {list}.", "Just say {list}."),
    QuestionType.WH_SELECTION: ("Which one do you want, {list}?", "What would you like to do, {list}?",
                                "Which topic sounds good, {list}?", "What do you prefer, {list}?"),
    QuestionType.YES_NO_SELECTION: ("Do you want {list}?", "Would you like {list}?",
                                    "Do you prefer {list}?", "Would you rather try {list}?"),
}

_SELECTION_FAMILY = (QuestionType.SELECTION, QuestionType.INSTRUCTION_SELECTION,
                     QuestionType.WH_SELECTION, QuestionType.YES_NO_SELECTION)


def _join(items: list[str], rng: random.Random) -> str:
    if len(items) == 2:
        return f"{items[0]} or {items[1]}"
    sep = rng.choice((" or ", ", or "))
    return ", ".join(items[:-1]) + sep + items[-1]


@dataclass
class _Node:
    id: str
    topic: str
    degree: int
    final: bool = False


def _pick_type(degree: int, rng: random.Random) -> QuestionType:
    if degree == 2:
        kinds = [QuestionType.YES_NO, *_SELECTION_FAMILY, QuestionType.WH, QuestionType.INSTRUCTION]
        weights = [3, 3, 3, 3, 2, 1, 1]
    else:
        kinds = list(_SELECTION_FAMILY)
        weights = [3, 3, 3, 2]
    return rng.choices(kinds, weights)[0]


def _question_texts(kind: QuestionType, options: list[str], topic: str, noun: str,
                    count: int, rng: random.Random) -> list[str]:
    frames = list(FRAMES[kind])
    rng.shuffle(frames)
    out = []
    for frame in frames[:count]:
        out.append(frame.format(list=_join(options, rng), a=options[0] if options else "",
                                topic=topic, noun=noun))
    return out


def _gen_skill(rng: random.Random, index: int, size_range, variants_range, branching_range) -> SkillSpec:
    n = rng.randint(*size_range)
    n_final = 2 if n >= 8 and rng.random() < 0.3 else 1
    name = f"{SKILL_NAMES[index % len(SKILL_NAMES)]}"
    if index >= len(SKILL_NAMES):
        name += f" {index // len(SKILL_NAMES) + 1}"
    words = rng.sample(VOCAB, min(len(VOCAB), n * (branching_range[1] + 1)))
    nodes = [_Node(f"s{i}", "", rng.randint(*branching_range), final=i >= n - n_final)
             for i in range(n)]
    for node in nodes:
        if node.final:
            node.degree = 0
    lexicon = load_noun_lexicon()

    # Spanning tree: each state hangs off an earlier non-final state with spare capacity.
    edges: dict[str, list[str]] = {nd.id: [] for nd in nodes}
    for j in range(1, n):
        eligible = [nd for nd in nodes[:j] if not nd.final and len(edges[nd.id]) < nd.degree]
        parent = rng.choice(eligible)
        edges[parent.id].append(nodes[j].id)

    # Side edges: back to the hub, jumps across the tree, or early exits.
    finals = [nd.id for nd in nodes if nd.final]
    for nd in nodes:
        while not nd.final and len(edges[nd.id]) < nd.degree:
            choices = [m.id for m in nodes if m.id != nd.id and m.id not in edges[nd.id]]
            roll = rng.random()
            if roll < 0.4 and nd.id != "s0" and "s0" not in edges[nd.id]:
                target = "s0"
            elif roll < 0.55:
                target = rng.choice(finals)
                if target in edges[nd.id]:
                    target = rng.choice(choices)
            else:
                target = rng.choice(choices)
            edges[nd.id].append(target)

    # Option words label the transitions; a state's topic is the word that leads to it.
    topics: dict[str, str] = {"s0": name.lower()}
    labels: dict[str, list[str]] = {}
    for nd in nodes:
        labels[nd.id] = [words.pop() for _ in edges[nd.id]]
        for target, word in zip(edges[nd.id], labels[nd.id]):
            topics.setdefault(target, word)
    for nd in nodes:
        nd.topic = topics.get(nd.id, nd.id)

    states = []
    for nd in nodes:
        k = rng.randint(*variants_range)
        if nd.final:
            pool = [t.format(name=name, topic=nd.topic) for t in FINAL_TEXTS]
            rng.shuffle(pool)
            if len({tuple(rule_based_inputs(u)) for u in pool[:k]}) != 1:
                raise RuntimeError(f"goodbye paraphrases of {nd.id} parse differently")
            states.append(SpecState(nd.id, pool[:k], [], None, True))
            continue
        kind = _pick_type(nd.degree, rng)
        noun = rng.choice(sorted(lexicon))
        opts = labels[nd.id]
        transitions = []
        if kind == QuestionType.YES_NO:
            transitions.append(Transition(["yes", "yeah", "sure"], edges[nd.id][0]))
            transitions.append(Transition(["no", "nope"], edges[nd.id][1]))
            visible = ["yes", "no"]
        elif kind in (QuestionType.WH, QuestionType.INSTRUCTION):
            first = lexicon[noun] if kind == QuestionType.WH else opts[0]
            hidden = list(HIDDEN_COMMANDS)
            rng.shuffle(hidden)
            transitions.append(Transition([first], edges[nd.id][0]))
            for target in edges[nd.id][1:]:
                transitions.append(Transition([hidden.pop()], target))
            visible = [first]
        else:
            for word, target in zip(opts, edges[nd.id]):
                transitions.append(Transition([word], target))
            visible = (["yes", "no"] if kind == QuestionType.YES_NO_SELECTION else []) + opts
        questions = _question_texts(kind, opts, nd.topic, noun, 4, rng)
        prefixes = list(ROOT_PREFIXES if nd.id == "s0" else PREFIXES)
        rng.shuffle(prefixes)
        utterances = []
        for i in range(k):
            prefix = prefixes[i % len(prefixes)].format(name=name, topic=nd.topic)
            utterances.append(f"{prefix} {questions[i % len(questions)]}")
        for u in utterances:
            got = rule_based_inputs(u)
            if got != visible:
                raise RuntimeError(f"generated utterance {u!r} parses to {got}, expected {visible}")
        leads = rng.sample(CONFUSION_LEADS, 2)
        bare_question = questions[0]
        fallback = Fallback([f"{lead} {bare_question}" for lead in leads], nd.id)
        states.append(SpecState(nd.id, utterances, transitions, fallback, False))

    spec = SkillSpec(name, f"open {name.lower()}", "s0", states)
    return load_spec(spec.to_dict())


def gen_corpus(seed: int, count: int, size_range: tuple[int, int] = (5, 15),
               variants_range: tuple[int, int] = (2, 4),
               branching_range: tuple[int, int] = (2, 4)) -> list[SkillSpec]:
    for lo, hi in (size_range, variants_range, branching_range):
        if lo > hi or lo < 1:
            raise ValueError(f"bad range {lo}..{hi}")
    if size_range[0] < 2:
        raise ValueError("skills need at least two states")
    if branching_range[0] < 2:
        raise ValueError("branching must be at least 2")
    rng = random.Random(seed)
    corpus = []
    for i in range(count):
        for _ in range(50):
            try:
                corpus.append(_gen_skill(rng, i, size_range, variants_range, branching_range))
                break
            except (RuntimeError, SchemaError):
                continue
        else:
            raise RuntimeError(f"could not generate skill {i}")
    return corpus


def distinct_texts(spec: SkillSpec) -> bool:
    seen = set()
    for s in spec.states:
        for u in s.utterances:
            key = normalize(u)
            if key in seen:
                return False
            seen.add(key)
    return True
