#!/usr/bin/env python3
"""Generate MultiWOZ 2.2-format dialogue fixtures from the bundled databases.

Each dialogue is built around real database entities so that the gold
dialogue state always matches at least one record. User and system turns
carry the same annotation layout as the released MultiWOZ 2.2 files:
per-service frames with ``state`` (active_intent, requested_slots,
slot_values) on user turns, and value spans (``slots``) on system turns.

Usage: python3 scripts/make_fixtures.py [data_dir]
"""

import json
import os
import random
import sys

DAYS = ["monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"]


class Builder:
    """Accumulates turns for one dialogue."""

    def __init__(self, dialogue_id, services):
        self.dialogue_id = dialogue_id
        self.services = services
        self.turns = []
        self.state = {s: {} for s in services}

    def user(self, text, domain=None, intent=None, add=None, requested=None):
        if domain is not None and add:
            for k, v in add.items():
                self.state[domain][f"{domain}-{k}"] = [v]
        frames = []
        for s in self.services:
            active = intent if s == domain else "NONE"
            frames.append(
                {
                    "actions": [],
                    "service": s,
                    "slots": [],
                    "state": {
                        "active_intent": active,
                        "requested_slots": [f"{s}-{r}" for r in (requested or [])] if s == domain else [],
                        "slot_values": dict(self.state[s]),
                    },
                }
            )
        self.turns.append(
            {"frames": frames, "speaker": "USER", "turn_id": str(len(self.turns)), "utterance": text}
        )

    def system(self, domain, parts):
        """parts: list of str or (slot, value) tuples to be annotated as spans."""
        text = ""
        spans = []
        for p in parts:
            if isinstance(p, tuple):
                slot, value = p
                start = len(text)
                text += value
                spans.append(
                    {"exclusive_end": len(text), "slot": f"{domain}-{slot}", "start": start, "value": value}
                )
            else:
                text += p
        frames = [
            {"actions": [], "service": s, "slots": spans if s == domain else []}
            for s in self.services
        ]
        self.turns.append(
            {"frames": frames, "speaker": "SYSTEM", "turn_id": str(len(self.turns)), "utterance": text}
        )

    def done(self):
        return {"dialogue_id": self.dialogue_id, "services": self.services, "turns": self.turns}


def restaurant(b, rng, db):
    e = rng.choice(db["restaurant"])
    d = "restaurant"
    if rng.random() < 0.2:
        b.user(f"i am looking for a restaurant called {e['name']}.", d, "find_restaurant", {"name": e["name"]})
        b.system(d, [("name", e["name"]), " is a ", ("pricerange", e["pricerange"]), " ",
                     ("food", e["food"]), " restaurant in the ", ("area", e["area"]), ". what would you like to know?"])
    else:
        matching = [x for x in db["restaurant"] if x["area"] == e["area"] and x["pricerange"] == e["pricerange"]]
        b.user(f"i want a {e['pricerange']} restaurant in the {e['area']} of town.", d, "find_restaurant",
               {"pricerange": e["pricerange"], "area": e["area"]})
        b.system(d, ["there are ", ("choice", str(len(matching))), " restaurants that fit. what type of food would you like?"])
        b.user(f"{e['food']} food, please.", d, "find_restaurant", {"food": e["food"]})
        first = [x for x in matching if x["food"] == e["food"]][0]
        b.system(d, [("name", first["name"]), " serves ", ("food", first["food"]),
                     " food and is in the ", ("area", first["area"]), ". shall i give you more details?"])
        e = first
    req = rng.sample(["phone", "address", "postcode"], 2)
    b.user(f"yes, what is the {req[0]} and {req[1]}?", d, "find_restaurant", requested=req)
    b.system(d, ["the ", req[0], " is ", (req[0], e[req[0]]), " and the ", req[1], " is ", (req[1], e[req[1]]), "."])
    if rng.random() < 0.5:
        people, day, time = str(rng.randint(1, 8)), rng.choice(DAYS), rng.choice(["12:00", "18:30", "19:15", "9:45"])
        b.user(f"please book a table for {people} people at {time} on {day}.", d, "book_restaurant",
               {"bookpeople": people, "bookday": day, "booktime": time})
        b.system(d, ["your table is booked. the reference number is ", ("ref", ref(rng)), "."])


def hotel(b, rng, db):
    e = rng.choice(db["hotel"])
    d = "hotel"
    b.user(f"i need a {e['type']} in the {e['area']} with {e['stars']} stars.", d, "find_hotel",
           {"type": e["type"], "area": e["area"], "stars": e["stars"]})
    matching = [x for x in db["hotel"] if x["type"] == e["type"] and x["area"] == e["area"] and x["stars"] == e["stars"]]
    first = matching[0]
    if len(matching) > 1:
        b.system(d, ["i have ", ("choice", str(len(matching))), " options. ", ("name", first["name"]),
                     " is one of them. would that work?"])
    else:
        b.system(d, [("name", first["name"]), " matches your request. would that work?"])
    if rng.random() < 0.6:
        people, day, stay = str(rng.randint(1, 6)), rng.choice(DAYS), str(rng.randint(1, 5))
        b.user(f"yes, book it for {people} people for {stay} nights starting {day}.", d, "book_hotel",
               {"bookpeople": people, "bookday": day, "bookstay": stay})
        b.system(d, ["done. your reference number is ", ("ref", ref(rng)), "."])
    req = rng.choice(["phone", "address", "postcode"])
    b.user(f"can you also give me the {req} of the hotel?", d, "find_hotel", requested=[req])
    b.system(d, ["of course, it is ", (req, first[req]), "."])
    return first


def attraction(b, rng, db):
    e = rng.choice(db["attraction"])
    d = "attraction"
    typ = e["type"] if e["type"] != "mutliple sports" else "multiple sports"
    b.user(f"are there any {typ} attractions in the {e['area']}?", d, "find_attraction",
           {"type": typ, "area": e["area"]})
    first = [x for x in db["attraction"] if x["type"] == e["type"] and x["area"] == e["area"]][0]
    b.system(d, ["yes, ", ("name", first["name"]), " is a ", ("type", e["type"]), " in the ",
                 ("area", first["area"]), ". anything else?"])
    req = rng.sample(["phone", "address", "postcode"], 2)
    b.user(f"what is their {req[0]} and {req[1]}?", d, "find_attraction", requested=req)
    b.system(d, ["their ", req[0], " is ", (req[0], first[req[0]]), " and ", req[1], " is ",
                 (req[1], first[req[1]]), "."])
    return first


def train(b, rng, db):
    e = rng.choice(db["train"])
    d = "train"
    b.user(f"i need a train from {e['departure']} to {e['destination']}.", d, "find_train",
           {"departure": e["departure"], "destination": e["destination"]})
    matching = [x for x in db["train"] if x["departure"] == e["departure"] and x["destination"] == e["destination"]]
    b.system(d, ["there are ", ("choice", str(len(matching))), " trains on that route. what day will you travel?"])
    b.user(f"on {e['day']}, leaving after {e['leaveAt']}.", d, "find_train",
           {"day": e["day"], "leaveat": e["leaveAt"]})
    cands = [x for x in matching if x["day"] == e["day"] and x["leaveAt"] >= e["leaveAt"]]
    first = cands[0]
    b.system(d, [("trainid", first["trainID"]), " leaves at ", ("leaveat", first["leaveAt"]), " and arrives by ",
                 ("arriveby", first["arriveBy"]), ". would you like to book it?"])
    if rng.random() < 0.6:
        people = str(rng.randint(1, 6))
        b.user(f"yes, {people} tickets please.", d, "book_train", {"bookpeople": people})
        b.system(d, ["booked! the total fee is ", ("price", first["price"]), ". reference number: ",
                     ("ref", ref(rng)), "."])
    else:
        b.user("what is the train id and the price?", d, "find_train", requested=["trainid", "price"])
        b.system(d, ["it is ", ("trainid", first["trainID"]), " and costs ", ("price", first["price"]), "."])


def taxi(b, rng, src, dst):
    d = "taxi"
    hh = rng.randint(7, 22)
    mm = rng.choice(["00", "15", "30", "45"])
    leave = f"{hh:02d}:{mm}"
    b.user(f"i also need a taxi from {src} to {dst}, leaving at {leave}.", d, "find_taxi",
           {"departure": src, "destination": dst, "leaveat": leave})
    car = rng.choice(["black toyota", "white skoda", "red bmw", "blue honda", "grey ford"])
    phone = "07" + "".join(str(rng.randint(0, 9)) for _ in range(9))
    b.system(d, ["i have booked a ", ("type", car), " for you. the contact number is ", ("phone", phone), "."])


def ref(rng):
    return "".join(rng.choice("ABCDEFGHJKLMNPQRSTUVWXYZ0123456789") for _ in range(8))


def dialogue(idx, rng, db, prefix):
    plan = rng.choice(
        [
            ["restaurant"],
            ["hotel"],
            ["attraction"],
            ["train"],
            ["hotel", "taxi"],
            ["attraction", "taxi"],
            ["restaurant", "train"],
            ["attraction", "restaurant"],
            ["hotel", "train"],
        ]
    )
    b = Builder(f"{prefix}{idx:04d}.json", plan)
    venue = None
    for dom in plan:
        if dom == "restaurant":
            restaurant(b, rng, db)
        elif dom == "hotel":
            venue = hotel(b, rng, db)
        elif dom == "attraction":
            venue = attraction(b, rng, db)
        elif dom == "train":
            train(b, rng, db)
        elif dom == "taxi":
            other = rng.choice(db["restaurant"])["name"]
            taxi(b, rng, venue["name"], other)
    b.user(rng.choice(["thank you, goodbye.", "that is all i need, thanks. bye.", "great, thanks for your help!"]))
    b.system(plan[-1], [rng.choice(["you are welcome. goodbye.", "have a great day!", "enjoy your trip. bye."])])
    return b.done()


def main():
    root = sys.argv[1] if len(sys.argv) > 1 else os.path.join(os.path.dirname(__file__), "..", "data")
    db = {}
    for dom in ["restaurant", "hotel", "attraction", "train"]:
        with open(os.path.join(root, "db", f"{dom}_db.json")) as f:
            db[dom] = json.load(f)
    for name, seed, count, prefix in [("test50.json", 2024, 50, "TST"), ("val30.json", 7, 30, "VAL")]:
        rng = random.Random(seed)
        dialogues = [dialogue(i, rng, db, prefix) for i in range(count)]
        with open(os.path.join(root, "fixtures", name), "w") as f:
            json.dump(dialogues, f, indent=1)
            f.write("\n")


if __name__ == "__main__":
    main()
