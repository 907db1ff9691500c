"""Render the bundled daylight RGB-D sample into src/nightforge/data/."""

from pathlib import Path

from nightforge.imageio import write_pfm, write_png16
from nightforge.sample import SAMPLE_DEPTH, SAMPLE_RGB, render_daylight_scene

DATA = Path(__file__).resolve().parents[1] / "src" / "nightforge" / "data"

if __name__ == "__main__":
    rgb, depth = render_daylight_scene(96, 128, seed=0)
    DATA.mkdir(parents=True, exist_ok=True)
    write_png16(DATA / SAMPLE_RGB, rgb)
    write_pfm(DATA / SAMPLE_DEPTH, depth)
    print(f"wrote {DATA / SAMPLE_RGB} and {DATA / SAMPLE_DEPTH}")
