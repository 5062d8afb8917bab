package pp.battleship.view;

import pp.battleship.model.Battleship;

/**
 * Keeps ship spatials in sync with the model.
 */
abstract class ShipUpdater {
    protected abstract Spatial lookup(Battleship ship);

    public void update(Battleship ship) {
        update(ship, lookup(ship));
    }

    public void update(Battleship ship, Spatial spatial) {
        if (spatial == null) return;
        spatial.setLocalTranslation(ship.getX(), 0f, ship.getY());
    }

    interface Listener {
        void shipUpdated(Battleship ship);

        default void shipRemoved(Battleship ship) {
            // nothing by default
        }
    }
}
