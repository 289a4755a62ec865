#!/usr/bin/env python3
"""Generate the small DBpedia-style demo dataset under data/demo.

Output is deterministic for a given --seed: triples.nt, mapping.tsv and
ratings.csv (MovieLens layout). Two real titles are included with their
category lists so the explanation output can be compared by eye.
"""
import argparse
import pathlib
import random

DBR = "http://dbpedia.org/resource/"
DBC = "http://dbpedia.org/resource/Category:"
DCT_SUBJECT = "http://purl.org/dc/terms/subject"
DBO = "http://dbpedia.org/ontology/"
RDFS_LABEL = "http://www.w3.org/2000/01/rdf-schema#label"

REAL = [
    (589, "Terminator_2:_Judgment_Day", "Terminator 2: Judgment Day (1991)",
     ["1990s_science_fiction_films", "Science_fiction_adventure_films", "Drone_films", "Cyberpunk_films"],
     ["Arnold_Schwarzenegger", "Linda_Hamilton", "Edward_Furlong"], ["James_Cameron"],
     ["James_Cameron", "William_Wisher"]),
    (69526, "Transformers:_Revenge_of_the_Fallen", "Transformers: Revenge of the Fallen (2009)",
     ["Science_fiction_adventure_films", "Films_set_in_Egypt", "Robot_films", "Films_shot_in_Arizona",
      "Ancient_astronauts_in_fiction", "IMAX_films"],
     ["Shia_LaBeouf", "Megan_Fox", "Josh_Duhamel"], ["Michael_Bay"],
     ["Ehren_Kruger", "Roberto_Orci", "Alex_Kurtzman"]),
]

CATEGORIES = [
    "1990s_science_fiction_films", "Science_fiction_adventure_films", "Drone_films", "Cyberpunk_films",
    "Films_set_in_Egypt", "Robot_films", "Films_shot_in_Arizona", "Ancient_astronauts_in_fiction", "IMAX_films",
    "American_action_thriller_films", "Romantic_comedy_films", "Films_about_time_travel", "Space_adventure_films",
    "Heist_films", "Films_set_in_Paris", "Coming-of-age_films", "Neo-noir_films", "Disaster_films",
    "Musical_films", "Films_about_artificial_intelligence", "Post-apocalyptic_films", "Courtroom_films",
    "Sports_drama_films", "Films_set_in_New_York_City", "Vampire_films", "Animated_feature_films",
    "War_drama_films", "Psychological_thriller_films", "Buddy_cop_films", "Fantasy_adventure_films",
]

FIRST = ["Ava", "Ben", "Clara", "Dario", "Elena", "Felix", "Greta", "Hugo", "Iris", "Jonas", "Kira", "Luca",
         "Mara", "Nico", "Olga", "Paolo", "Rosa", "Sven", "Tara", "Umberto"]
LAST = ["Albers", "Bruno", "Castell", "Dunmore", "Esposito", "Falk", "Garrido", "Holm", "Ivers", "Jansen",
        "Kowal", "Lindqvist", "Moretti", "Navarro", "Ostrom"]
ADJ = ["Silent", "Last", "Crimson", "Hidden", "Broken", "Electric", "Golden", "Distant", "Frozen", "Midnight",
       "Burning", "Final", "Iron", "Lost", "Savage"]
NOUN = ["Horizon", "Protocol", "Harbor", "Signal", "Empire", "Garden", "Machine", "Frontier", "Witness", "Voyage",
        "Kingdom", "Echo", "Circuit", "River", "Citadel"]


def iri(s):
    return "<" + s + ">"


def literal(text):
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"@en'


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "data" / "demo"))
    ap.add_argument("--items", type=int, default=120)
    ap.add_argument("--users", type=int, default=60)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    people = sorted({f"{f}_{l}" for f in FIRST for l in LAST})
    actors, directors, writers = people[:120], people[120:160], people[160:220]

    movies = list(REAL)
    titles = set()
    for k in range(args.items - len(REAL)):
        while True:
            name = f"{rng.choice(ADJ)} {rng.choice(NOUN)}"
            if name not in titles:
                titles.add(name)
                break
        year = rng.randint(1975, 2015)
        slug = f"{name.replace(' ', '_')}_({year}_film)"
        movies.append((1000 + k, slug, f"{name} ({year})",
                       rng.sample(CATEGORIES, rng.randint(2, 6)),
                       rng.sample(actors, rng.randint(1, 3)),
                       rng.sample(directors, 1),
                       rng.sample(writers, rng.randint(1, 2))))

    lines = []
    labelled = set()
    for _id, slug, title, cats, cast, dirs, wrs in movies:
        subj = iri(DBR + slug)
        lines.append(f"{subj} {iri(RDFS_LABEL)} {literal(title.rsplit(' (', 1)[0])} .")
        for c in cats:
            lines.append(f"{subj} {iri(DCT_SUBJECT)} {iri(DBC + c)} .")
        for pred, objs in (("starring", cast), ("director", dirs), ("writer", wrs)):
            for o in objs:
                lines.append(f"{subj} {iri(DBO + pred)} {iri(DBR + o)} .")
                labelled.add(o)
    for o in sorted(labelled):
        lines.append(f"{iri(DBR + o)} {iri(RDFS_LABEL)} {literal(o.replace('_', ' '))} .")
    (out / "triples.nt").write_text("# demo knowledge graph (DBpedia-style)\n" + "\n".join(lines) + "\n")

    with open(out / "mapping.tsv", "w") as f:
        f.write("itemId\tentityIRI\ttitle\ttrailerURL\n")
        for mid, slug, title, *_ in movies:
            f.write(f"{mid}\t{DBR}{slug}\t{title}\thttps://trailers.example.org/{mid}\n")

    # Users like a few categories; ratings follow the overlap plus noise.
    rows = []
    popular = sorted(movies, key=lambda m: rng.random())
    for u in range(1, args.users + 1):
        liked = set(rng.sample(CATEGORIES, 5))
        count = rng.randint(15, 40)
        seen = rng.sample(popular[: len(popular) * 2 // 3], count)
        for mid, _slug, _title, cats, *_ in seen:
            affinity = len(liked & set(cats)) / max(1, len(cats))
            stars = 1.0 + 4.0 * affinity + rng.gauss(0.0, 0.6)
            stars = min(5.0, max(0.5, round(stars * 2) / 2))
            rows.append((u, mid, stars, 1_400_000_000 + rng.randint(0, 10_000_000)))
    with open(out / "ratings.csv", "w") as f:
        f.write("userId,movieId,rating,timestamp\n")
        for u, mid, stars, ts in rows:
            f.write(f"{u},{mid},{stars:.1f},{ts}\n")


if __name__ == "__main__":
    main()
