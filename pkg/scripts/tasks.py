"""Question answering, grounding, retrieval and planning over generated scenes.

    python scripts/tasks.py --seeds 0 6 --objects 10
"""

import argparse
import json

from osgrag.evaluation import planning_metrics, qa_accuracy
from osgrag.model_clients import MockBackend
from osgrag.rag_tasks import answer_question, ground_query, plan_from_text, plan_task, retrieve_instance, validate_plan
from osgrag.synthetic import SceneSpec, generate_plans, generate_qa, generate_scene
from osgrag.vector_store import build_chunks, index_chunks


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, nargs=2, default=(0, 6), metavar=("FIRST", "STOP"))
    ap.add_argument("--objects", type=int, default=10)
    args = ap.parse_args()

    answers, ground_hits, retrieve_hits, total, reports = [], 0, 0, 0, []
    for seed in range(*args.seeds):
        g = generate_scene(SceneSpec(seed=seed, object_count=args.objects)).graph
        be = MockBackend(seed=seed)
        db = index_chunks(build_chunks(g), be)
        for item in generate_qa(g):
            answers.append((answer_question(item["question"], db, be, be).answer, item["answer"]))
        for n in g.nodes.values():
            phrase = n.description.split(" ", 1)[1]
            ground_hits += ground_query(f"Where is the {phrase}?", db, be, be, g).node_id == n.id
            retrieve_hits += retrieve_instance(db, be, g, text=phrase).node_id == n.id
            total += 1
        for p in generate_plans(g):
            result = plan_task(p["instruction"], g, be, be)
            reports.append(validate_plan(result.plan, g, plan_from_text(", ".join(p["reference_steps"]))))
    print(json.dumps({
        "qa_accuracy": qa_accuracy(answers),
        "questions": len(answers),
        "ground_accuracy": ground_hits / total,
        "retrieve_accuracy": retrieve_hits / total,
        "instances": total,
        "plans": len(reports),
        **planning_metrics(reports),
    }, indent=2))


if __name__ == "__main__":
    main()
