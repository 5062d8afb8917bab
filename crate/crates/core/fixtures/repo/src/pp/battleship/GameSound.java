package pp.battleship;

import java.util.prefs.Preferences;

/**
 * Application state that plays sound effects.
 */
public class GameSound extends AbstractAppState {
    private static final Preferences PREFERENCES = Preferences.userNodeForPackage(GameSound.class);
    private AudioNode splashSound;
    private AudioNode shipDestroyedSound;

    public boolean isEnabled() {
        return PREFERENCES.getBoolean("sound.enabled", true);
    }

    @Override
    public void setEnabled(boolean enabled) {
        if (isEnabled() == enabled) return;
        super.setEnabled(enabled);
        PREFERENCES.putBoolean("sound.enabled", enabled);
    }

    @Override
    public void initialize(AppStateManager stateManager, Application app) {
        super.initialize(stateManager, app);
        splashSound = loadSound(app, "Sound/Effects/splash.wav");
        shipDestroyedSound = loadSound(app, "Sound/Effects/explosion.wav");
    }

    private AudioNode loadSound(Application app, String name) {
        try {
            final AudioNode sound = new AudioNode(app.getAssetManager(), name, AudioData.DataType.Buffer);
            sound.setLooping(false);
            sound.setPositional(false);
            return sound;
        }
        catch (AssetLoadException | AssetNotFoundException ex) {
            return null;
        }
    }

    public void splash() {
        if (isEnabled() && splashSound != null) splashSound.playInstance();
    }

    public void shipDestroyed() {
        if (isEnabled() && shipDestroyedSound != null) shipDestroyedSound.playInstance();
    }
}
